use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! one_based_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            /// Zero-based position in the owning vector.
            #[inline]
            pub fn index(self) -> usize {
                debug_assert!(self.0 >= 1);
                self.0 as usize - 1
            }

            #[inline]
            pub fn from_index(index: usize) -> Self {
                Self(index as u32 + 1)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

one_based_id!(
    /// Service index `w` in `1..=W`.
    ServiceId
);
one_based_id!(
    /// Edge node index `n` in `1..=N`.
    NodeId
);
one_based_id!(
    /// Edge access point index `b` in `1..=B`.
    EapId
);

/// Where a dispatched request goes. Action index 0 is the cloud and `j`
/// is edge node `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DispatchTarget {
    Cloud,
    Node(NodeId),
}

impl DispatchTarget {
    pub fn from_action(action: usize) -> Self {
        if action == 0 {
            DispatchTarget::Cloud
        } else {
            DispatchTarget::Node(NodeId(action as u32))
        }
    }

    pub fn action(self) -> usize {
        match self {
            DispatchTarget::Cloud => 0,
            DispatchTarget::Node(n) => n.0 as usize,
        }
    }
}

/// Per-node service scaling choice `l` in `-W..=W`: `+w` adds a replica of
/// service `w`, `-w` removes one, `0` leaves the node untouched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScaleAction(pub i32);

impl ScaleAction {
    pub const NOOP: ScaleAction = ScaleAction(0);

    pub fn add(service: ServiceId) -> Self {
        ScaleAction(service.0 as i32)
    }

    pub fn remove(service: ServiceId) -> Self {
        ScaleAction(-(service.0 as i32))
    }

    pub fn service(self) -> Option<ServiceId> {
        (self.0 != 0).then(|| ServiceId(self.0.unsigned_abs()))
    }

    pub fn is_add(self) -> bool {
        self.0 > 0
    }

    pub fn is_remove(self) -> bool {
        self.0 < 0
    }

    /// Position in the `2W+1` action list ordered `-W, ..., 0, ..., W`.
    pub fn to_index(self, num_services: usize) -> usize {
        (self.0 + num_services as i32) as usize
    }

    pub fn from_index(index: usize, num_services: usize) -> Self {
        ScaleAction(index as i32 - num_services as i32)
    }
}
