use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{attributes::OrderRecord, Action, CourierId, FuCatalog, TrajectoryEvent};
use crate::error::{Error, Result};
use crate::geo::AoiMap;

/// Default separator between sessions: 30 minutes without action.
pub const DEFAULT_GAP_SECS: i64 = 30 * 60;

/// Skilled-courier efficiency band, as (exclusive lower, inclusive upper)
/// top-rank percentile.
pub const SC_BAND: (f64, f64) = (0.05, 0.35);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub courier_id: CourierId,
    pub events: Vec<TrajectoryEvent>,
}

impl Session {
    pub fn max_gap(&self) -> i64 {
        self.events
            .windows(2)
            .map(|w| w[1].timestamp - w[0].timestamp)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionFlags {
    pub overtime: bool,
    pub speeding: bool,
    pub negative_feedback: bool,
}

impl SessionFlags {
    pub fn any(&self) -> bool {
        self.overtime || self.speeding || self.negative_feedback
    }
}

/// Splits one courier's time-ordered events into sessions. A new session
/// starts exactly when the gap to the previous event exceeds `gap_secs`.
pub fn segment_sessions(events: &[TrajectoryEvent], gap_secs: i64) -> Result<Vec<Session>> {
    if gap_secs <= 0 {
        return Err(Error::validation("gap threshold must be positive"));
    }
    let Some(first) = events.first() else {
        return Ok(Vec::new());
    };
    let mut sessions = Vec::new();
    let mut current = vec![*first];
    for pair in events.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        if next.courier_id != first.courier_id {
            return Err(Error::validation("events from more than one courier"));
        }
        if next.timestamp < prev.timestamp {
            return Err(Error::validation(format!(
                "events not sorted by timestamp ({} after {})",
                next.timestamp, prev.timestamp
            )));
        }
        if next.timestamp - prev.timestamp > gap_secs {
            sessions.push(Session {
                courier_id: first.courier_id,
                events: std::mem::take(&mut current),
            });
        }
        current.push(next);
    }
    sessions.push(Session {
        courier_id: first.courier_id,
        events: current,
    });
    Ok(sessions)
}

/// Groups a mixed event stream by courier (stable in time) and segments each.
pub fn segment_all(events: &[TrajectoryEvent], gap_secs: i64) -> Result<Vec<Session>> {
    let mut by_courier: BTreeMap<CourierId, Vec<TrajectoryEvent>> = BTreeMap::new();
    for e in events {
        by_courier.entry(e.courier_id).or_default().push(*e);
    }
    let mut out = Vec::new();
    for (_, mut evs) in by_courier {
        evs.sort_by_key(|e| e.timestamp);
        out.extend(segment_sessions(&evs, gap_secs)?);
    }
    Ok(out)
}

/// Keeps sessions of skilled couriers that pass every selection criterion:
/// rank inside the band, no overtime, speeding or negative feedback, and
/// no intra-session gap above 30 minutes. `flags` is aligned with `sessions`.
pub fn filter_sc_sessions(
    sessions: &[Session],
    courier_rank: &HashMap<CourierId, f64>,
    flags: &[SessionFlags],
) -> Vec<Session> {
    sessions
        .iter()
        .zip(flags.iter().copied().chain(std::iter::repeat(SessionFlags::default())))
        .filter(|(s, f)| {
            let in_band = courier_rank
                .get(&s.courier_id)
                .is_some_and(|&r| r > SC_BAND.0 && r <= SC_BAND.1);
            in_band && !f.any() && s.max_gap() <= DEFAULT_GAP_SECS
        })
        .map(|(s, _)| s.clone())
        .collect()
}

/// Derives the selection flags of a session from order records and travel
/// speeds between consecutive events.
pub fn session_flags(
    session: &Session,
    orders: &HashMap<super::OrderId, OrderRecord>,
    catalog: &FuCatalog,
    centroids: &AoiMap,
    speed_limit_mps: f64,
) -> SessionFlags {
    let mut flags = SessionFlags::default();
    for e in &session.events {
        if let Some(rec) = orders.get(&e.order_id) {
            if e.action == Action::Delivery && e.timestamp > rec.deadline {
                flags.overtime = true;
            }
            flags.negative_feedback |= rec.negative_feedback;
        }
    }
    let location = |e: &TrajectoryEvent| {
        catalog.get(e.fu).map(|u| match e.action {
            Action::Pickup => u.pickup_aoi,
            Action::Delivery => u.delivery_aoi,
        })
    };
    for w in session.events.windows(2) {
        let (Some(a), Some(b)) = (location(&w[0]), location(&w[1])) else {
            continue;
        };
        let Some(dist) = centroids.distance(a, b) else {
            continue;
        };
        let dt = (w[1].timestamp - w[0].timestamp) as f64;
        if dist > 1.0 && (dt <= 0.0 || dist / dt > speed_limit_mps) {
            flags.speeding = true;
        }
    }
    flags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{FuId, OrderId};
    use proptest::prelude::*;

    fn ev(t: i64) -> TrajectoryEvent {
        TrajectoryEvent {
            courier_id: CourierId(1),
            order_id: OrderId(t as u64),
            fu: FuId(0),
            action: Action::Pickup,
            timestamp: t,
        }
    }

    fn from_gaps(gaps_min: &[i64]) -> Vec<TrajectoryEvent> {
        let mut t = 0;
        let mut out = vec![ev(0)];
        for g in gaps_min {
            t += g * 60;
            out.push(ev(t));
        }
        out
    }

    #[test]
    fn splits_on_gap_above_threshold() {
        let s = segment_sessions(&from_gaps(&[10, 15, 45]), DEFAULT_GAP_SECS).unwrap();
        let sizes: Vec<_> = s.iter().map(|s| s.events.len()).collect();
        assert_eq!(sizes, vec![3, 1]);
    }

    #[test]
    fn single_event_is_one_session() {
        let s = segment_sessions(&[ev(5)], DEFAULT_GAP_SECS).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].events.len(), 1);
    }

    #[test]
    fn gap_equal_to_threshold_does_not_split() {
        let s = segment_sessions(&from_gaps(&[30]), DEFAULT_GAP_SECS).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn unsorted_input_is_rejected() {
        assert!(segment_sessions(&[ev(10), ev(5)], DEFAULT_GAP_SECS).is_err());
        assert!(segment_sessions(&[ev(1)], 0).is_err());
    }

    proptest! {
        #[test]
        fn sessions_partition_the_stream(gaps in prop::collection::vec(0i64..90, 0..40)) {
            let events = from_gaps(&gaps);
            let sessions = segment_sessions(&events, DEFAULT_GAP_SECS).unwrap();
            let joined: Vec<_> = sessions.iter().flat_map(|s| s.events.clone()).collect();
            prop_assert_eq!(joined, events);
            for s in &sessions {
                prop_assert!(!s.events.is_empty());
                prop_assert!(s.max_gap() <= DEFAULT_GAP_SECS);
            }
        }
    }

    fn session_of(courier: u32) -> Session {
        Session {
            courier_id: CourierId(courier),
            events: vec![ev(0)],
        }
    }

    #[test]
    fn filter_enforces_band_and_flags() {
        let sessions = vec![session_of(1), session_of(2), session_of(3), session_of(4)];
        let ranks: HashMap<_, _> = [
            (CourierId(1), 0.03),
            (CourierId(2), 0.20),
            (CourierId(3), 0.20),
            (CourierId(4), 0.35),
        ]
        .into_iter()
        .collect();
        let flags = vec![
            SessionFlags::default(),
            SessionFlags::default(),
            SessionFlags {
                overtime: true,
                ..Default::default()
            },
            SessionFlags::default(),
        ];
        let kept = filter_sc_sessions(&sessions, &ranks, &flags);
        let ids: Vec<_> = kept.iter().map(|s| s.courier_id.0).collect();
        assert_eq!(ids, vec![2, 4]);
    }

    #[test]
    fn filter_drops_unranked_and_long_gaps() {
        let mut long = session_of(2);
        long.events.push(ev(31 * 60));
        let ranks: HashMap<_, _> = [(CourierId(2), 0.2)].into_iter().collect();
        let kept = filter_sc_sessions(&[long, session_of(9)], &ranks, &[]);
        assert!(kept.is_empty());
    }
}
