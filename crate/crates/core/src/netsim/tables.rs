use std::collections::BTreeMap;
use std::fmt;

use super::NetError;

/// A two-digit table entry `hi/lo`. Only `0/0`, `0/1` and `1/1` are legal:
/// the first digit may be set only while the second is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Code {
    hi: bool,
    lo: bool,
}

impl Code {
    pub const OFF: Code = Code { hi: false, lo: false };
    pub const READY: Code = Code { hi: false, lo: true };
    pub const ACTIVE: Code = Code { hi: true, lo: true };

    pub fn new(hi: bool, lo: bool) -> Result<Self, NetError> {
        if hi && !lo {
            return Err(NetError::IllegalCode(format!("{}/{}", hi as u8, lo as u8)));
        }
        Ok(Self { hi, lo })
    }

    pub fn hi(self) -> bool {
        self.hi
    }

    pub fn lo(self) -> bool {
        self.lo
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.hi as u8, self.lo as u8)
    }
}

impl std::str::FromStr for Code {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bit = |c: &str| match c {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(NetError::IllegalCode(s.to_string())),
        };
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| NetError::IllegalCode(s.to_string()))?;
        Code::new(bit(a)?, bit(b)?)
    }
}

/// T1: addresses; T2: `current_mode/visc_enabled`; T3: `comm_on/link_available`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommTables {
    pub t1: BTreeMap<usize, String>,
    pub t2: BTreeMap<usize, Code>,
    pub t3: BTreeMap<usize, Code>,
}

impl CommTables {
    pub fn register(&mut self, turbine: usize, address: String, visc_enabled: bool, link: bool) {
        self.t1.insert(turbine, address);
        self.t2.insert(turbine, Code { hi: false, lo: visc_enabled });
        self.t3.insert(turbine, Code { hi: false, lo: link });
    }

    pub fn in_visc(&self, turbine: usize) -> bool {
        self.t2.get(&turbine).is_some_and(|c| c.hi)
    }

    pub fn visc_enabled(&self, turbine: usize) -> bool {
        self.t2.get(&turbine).is_some_and(|c| c.lo)
    }

    pub fn comm_on(&self, turbine: usize) -> bool {
        self.t3.get(&turbine).is_some_and(|c| c.hi)
    }

    /// Every entry is one of the legal codes (always true by construction;
    /// kept as a checkable invariant).
    pub fn is_legal(&self) -> bool {
        self.t2.values().chain(self.t3.values()).all(|c| c.lo || !c.hi)
    }

    pub(super) fn set_t2(&mut self, turbine: usize, code: Code) {
        self.t2.insert(turbine, code);
    }

    pub(super) fn set_t3(&mut self, turbine: usize, code: Code) {
        self.t3.insert(turbine, code);
    }
}
