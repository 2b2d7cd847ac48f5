//! Priority domains and the compound admission level.
//!
//! A request carries a business priority (assigned at the entry service from
//! an action table) and a user priority (an epoch-rotated hash of the user
//! id). A server's admission level is a cursor over the compound
//! (business, user) space: requests strictly above the cursor in
//! lexicographic order are shed.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// Highest business priority. Smaller values are more important.
pub const BUSINESS_MIN: u8 = 0;

/// Default lowest business priority (inclusive); configurable per deployment.
pub const DEFAULT_BUSINESS_MAX: u8 = 31;

/// User priorities always span exactly 128 levels.
pub const USER_LEVELS: u16 = 128;

/// Highest user priority.
pub const USER_MIN: u8 = 0;

/// Lowest user priority.
pub const USER_MAX: u8 = 127;

/// Business priority of a request. 0 is the most important.
#[derive(
    Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
)]
pub struct BusinessPriority(pub u8);

/// User priority of a request, in `[0, 127]`. 0 is the most important.
#[derive(
    Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
)]
pub struct UserPriority(pub u8);

impl UserPriority {
    pub fn new(value: u8) -> Self {
        assert!(value <= USER_MAX, "user priority out of range");
        UserPriority(value)
    }
}

/// The compound admission cursor `(B, U)`.
///
/// Ordered lexicographically: `(B1, U1) < (B2, U2)` iff `B1 < B2`, or
/// `B1 = B2` and `U1 < U2`. A request is admitted when its own (b, u) pair
/// is less than or equal to the cursor.
#[derive(
    Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
)]
pub struct AdmissionLevel {
    pub business: BusinessPriority,
    pub user: UserPriority,
}

impl AdmissionLevel {
    pub fn new(business: u8, user: u8) -> Self {
        AdmissionLevel {
            business: BusinessPriority(business),
            user: UserPriority::new(user),
        }
    }

    /// The fully open cursor for a deployment with the given lowest
    /// business priority: every request is admitted.
    pub fn fully_open(business_max: u8) -> Self {
        AdmissionLevel::new(business_max, USER_MAX)
    }

    /// The fully closed cursor: only `(0, 0)` requests are admitted.
    pub fn fully_closed() -> Self {
        AdmissionLevel::new(BUSINESS_MIN, USER_MIN)
    }

    /// True when a request with priorities `(b, u)` passes this cursor.
    ///
    /// Equivalent to the shed rule: shed iff `b > B` or (`b = B` and
    /// `u > U`).
    pub fn admits(&self, b: BusinessPriority, u: UserPriority) -> bool {
        (b, u) <= (self.business, self.user)
    }

    /// Flat index of this cursor in the compound level space.
    pub fn index(&self) -> usize {
        self.business.0 as usize * USER_LEVELS as usize + self.user.0 as usize
    }
}

/// Total order over compound levels.
pub fn compare_levels(a: AdmissionLevel, b: AdmissionLevel) -> Ordering {
    a.cmp(&b)
}

/// Immutable map from action identifier to business priority.
///
/// Actions missing from the table get the lowest priority
/// (`business_max`). The table is built once at scenario load.
#[derive(Clone, Debug)]
pub struct ActionPriorityTable {
    entries: HashMap<String, BusinessPriority>,
    lowest: BusinessPriority,
}

impl ActionPriorityTable {
    pub fn new(
        entries: impl IntoIterator<Item = (String, u8)>,
        business_max: u8,
    ) -> Self {
        let entries: HashMap<String, BusinessPriority> = entries
            .into_iter()
            .map(|(action, p)| {
                assert!(p <= business_max, "table priority exceeds business_max");
                (action, BusinessPriority(p))
            })
            .collect();
        ActionPriorityTable {
            entries,
            lowest: BusinessPriority(business_max),
        }
    }

    pub fn empty(business_max: u8) -> Self {
        ActionPriorityTable::new([], business_max)
    }

    /// Looks up the business priority of an action; absent actions map to
    /// the lowest priority.
    pub fn assign(&self, action_id: &str) -> BusinessPriority {
        self.entries.get(action_id).copied().unwrap_or(self.lowest)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Derives the user priority for `user_id` within a rotation epoch.
///
/// Deterministic for a fixed `(user_id, epoch)` pair; reshuffles across
/// epochs. The hash itself is a stable FNV-1a over the id bytes mixed with
/// the epoch through a 64-bit finalizer, so results do not depend on
/// platform or process.
pub fn derive_user_priority(user_id: &str, epoch: u64) -> UserPriority {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in user_id.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^= epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    // splitmix64 finalizer for avalanche
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    UserPriority((h % u64::from(USER_LEVELS)) as u8)
}

/// Computes the rotation epoch for a timestamp given the rotation period.
pub fn rotation_epoch(now: SimTime, period_ns: u64) -> u64 {
    debug_assert!(period_ns > 0);
    now.as_nanos() / period_ns
}

/// Identifies a user task end to end; all requests spawned for one task
/// share it.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct TaskId(pub u64);

/// Identifies an individual server replica.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct ServerId(pub u32);

impl ServerId {
    /// Pseudo-id for the client side of an entry service.
    pub const CLIENT: ServerId = ServerId(u32::MAX);
}

/// One service request in flight.
///
/// Priorities are assigned once at the entry service; every downstream
/// request spawned by the same task carries identical `(b, u)`.
#[derive(Clone, Debug)]
pub struct RequestEnvelope {
    pub task_id: TaskId,
    pub action_id: Arc<str>,
    pub user_id: Arc<str>,
    pub business: BusinessPriority,
    pub user: UserPriority,
    pub origin: ServerId,
    pub target: ServerId,
    pub arrival_time: SimTime,
    pub start_time: Option<SimTime>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_levels_examples() {
        assert_eq!(
            compare_levels(AdmissionLevel::new(2, 3), AdmissionLevel::new(2, 3)),
            Ordering::Equal
        );
        // business priority dominates the user priority
        assert_eq!(
            compare_levels(AdmissionLevel::new(1, 127), AdmissionLevel::new(2, 0)),
            Ordering::Less
        );
        assert_eq!(
            compare_levels(AdmissionLevel::new(2, 3), AdmissionLevel::new(2, 4)),
            Ordering::Less
        );
    }

    #[test]
    fn admits_examples() {
        let level = AdmissionLevel::new(2, 3);
        assert!(!level.admits(BusinessPriority(3), UserPriority(0)));
        assert!(level.admits(BusinessPriority(2), UserPriority(3)));
        assert!(!level.admits(BusinessPriority(2), UserPriority(4)));

        let open = AdmissionLevel::fully_open(DEFAULT_BUSINESS_MAX);
        assert!(open.admits(BusinessPriority(DEFAULT_BUSINESS_MAX), UserPriority(127)));
        assert!(open.admits(BusinessPriority(0), UserPriority(0)));
    }

    #[test]
    fn action_table_examples() {
        let table = ActionPriorityTable::new(
            [("login".to_string(), 0), ("pay".to_string(), 1)],
            DEFAULT_BUSINESS_MAX,
        );
        assert_eq!(table.assign("login"), BusinessPriority(0));
        assert_eq!(table.assign("pay"), BusinessPriority(1));
        assert_eq!(table.assign("moments"), BusinessPriority(DEFAULT_BUSINESS_MAX));

        let empty = ActionPriorityTable::empty(DEFAULT_BUSINESS_MAX);
        assert_eq!(empty.assign("anything"), BusinessPriority(DEFAULT_BUSINESS_MAX));
    }

    #[test]
    fn user_priority_is_deterministic_within_epoch() {
        let a = derive_user_priority("user-x", 5);
        let b = derive_user_priority("user-x", 5);
        assert_eq!(a, b);
    }

    #[test]
    fn user_priority_distribution_is_roughly_uniform() {
        // 10k users into 128 buckets: expect 78.125 per bucket. Check both
        // the absolute spread and a chi-square bound (127 dof, p > 0.001
        // means the statistic stays below ~182).
        let mut buckets = [0u32; USER_LEVELS as usize];
        for i in 0..10_000u32 {
            let id = format!("user-{i}");
            buckets[derive_user_priority(&id, 7).0 as usize] += 1;
        }
        let expected = 10_000.0 / USER_LEVELS as f64;
        let mut chi2 = 0.0;
        for &count in &buckets {
            assert!(
                (count as f64 - expected).abs() <= 40.0,
                "bucket count {count} strays too far from {expected}"
            );
            let d = count as f64 - expected;
            chi2 += d * d / expected;
        }
        assert!(chi2 < 182.0, "chi-square {chi2} exceeds the p=0.001 bound");
    }

    #[test]
    fn epoch_rotation_reshuffles_buckets() {
        let n = 10_000u32;
        let mut kept = 0u32;
        for i in 0..n {
            let id = format!("user-{i}");
            if derive_user_priority(&id, 5) == derive_user_priority(&id, 6) {
                kept += 1;
            }
        }
        let fraction = kept as f64 / n as f64;
        assert!(
            (fraction - 1.0 / USER_LEVELS as f64).abs() <= 0.01,
            "same-bucket fraction {fraction} should be near 1/128"
        );
    }

    #[test]
    fn rotation_epoch_boundaries() {
        let hour = 3_600_000_000_000u64;
        assert_eq!(rotation_epoch(SimTime::from_nanos(0), hour), 0);
        assert_eq!(rotation_epoch(SimTime::from_nanos(hour - 1), hour), 0);
        assert_eq!(rotation_epoch(SimTime::from_nanos(hour), hour), 1);
    }
}
