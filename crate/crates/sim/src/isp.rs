use std::net::Ipv4Addr;

use crate::config::IspKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimIsp {
    pub name: &'static str,
    pub kind: IspKind,
    pub base: Ipv4Addr,
    pub prefix_len: u8,
    pub country: &'static str,
    pub city: &'static str,
}

impl SimIsp {
    pub fn capacity(&self) -> u32 {
        1u32 << (32 - self.prefix_len)
    }

    pub fn cidr(&self) -> String {
        format!("{}/{}", self.base, self.prefix_len)
    }
}

const fn isp(
    name: &'static str,
    kind: IspKind,
    base: [u8; 4],
    prefix_len: u8,
    country: &'static str,
    city: &'static str,
) -> SimIsp {
    SimIsp {
        name,
        kind,
        base: Ipv4Addr::new(base[0], base[1], base[2], base[3]),
        prefix_len,
        country,
        city,
    }
}

/// Address plan of the simulated Internet.
pub const ISPS: [SimIsp; 7] = [
    isp("Hostinia", IspKind::Hosting, [100, 64, 0, 0], 16, "FR", "Roubaix"),
    isp("RackSpire", IspKind::Hosting, [100, 65, 0, 0], 16, "DE", "Nuremberg"),
    isp("CloudBarn", IspKind::Hosting, [100, 66, 0, 0], 16, "US", "Ashburn"),
    isp("Telecable", IspKind::Commercial, [100, 80, 0, 0], 14, "ES", "Madrid"),
    isp("LinkaNet", IspKind::Commercial, [100, 84, 0, 0], 14, "IT", "Milan"),
    isp("Homewire", IspKind::Commercial, [100, 88, 0, 0], 14, "US", "Chicago"),
    isp("Fibrea", IspKind::Commercial, [100, 92, 0, 0], 14, "FR", "Paris"),
];

/// The address plan as a geo table (`cidr,isp_name,isp_type,country,city`).
pub fn geoip_csv() -> String {
    let mut out = String::from("cidr,isp_name,isp_type,country,city\n");
    for i in ISPS {
        let kind = match i.kind {
            IspKind::Hosting => "hosting",
            IspKind::Commercial => "commercial",
        };
        out.push_str(&format!("{},{},{kind},{},{}\n", i.cidr(), i.name, i.country, i.city));
    }
    out
}

/// Hands out distinct addresses, sequentially within each ISP.
#[derive(Debug, Clone)]
pub struct IpAllocator {
    next: [u32; ISPS.len()],
}

impl Default for IpAllocator {
    fn default() -> Self {
        // skip the network address
        Self { next: [1; ISPS.len()] }
    }
}

impl IpAllocator {
    /// Next address of the ISP with index `isp`. Wraps once a block is used up.
    pub fn take(&mut self, isp: usize) -> Ipv4Addr {
        let i = &ISPS[isp];
        let n = self.next[isp];
        self.next[isp] = if n + 1 >= i.capacity() - 1 { 1 } else { n + 1 };
        Ipv4Addr::from(u32::from(i.base) + n)
    }

    /// Indices of the ISPs of one kind.
    pub fn of_kind(kind: IspKind) -> Vec<usize> {
        ISPS.iter()
            .enumerate()
            .filter(|(_, i)| i.kind == kind)
            .map(|(n, _)| n)
            .collect()
    }
}
