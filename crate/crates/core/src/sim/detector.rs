use super::CorridorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Upstream,
    StopLine,
}

/// One detector actuation on `lane` of the approach served by `phase`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorEvent {
    pub phase: usize,
    pub lane: usize,
    pub kind: DetectorKind,
}

/// Movement of one vehicle during a step, as distances to the stop line.
/// Positive is upstream of the stop line; negative means it has crossed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleMove {
    pub phase: usize,
    pub lane: usize,
    pub from_m: f64,
    pub to_m: f64,
}

/// Pulses emitted by the vehicles that crossed a detector during the step.
///
/// Vehicles only move downstream, so each one crosses each detector at most
/// once per approach pass.
pub fn detector_events(moves: &[VehicleMove], config: &CorridorConfig) -> Vec<DetectorEvent> {
    let upstream_m = config.upstream_detector_m();
    let mut events = Vec::new();
    for m in moves {
        if m.from_m > upstream_m && m.to_m <= upstream_m {
            events.push(DetectorEvent {
                phase: m.phase,
                lane: m.lane,
                kind: DetectorKind::Upstream,
            });
        }
        if m.from_m >= 0.0 && m.to_m < 0.0 {
            events.push(DetectorEvent {
                phase: m.phase,
                lane: m.lane,
                kind: DetectorKind::StopLine,
            });
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mv(from_m: f64, to_m: f64) -> VehicleMove {
        VehicleMove {
            phase: 0,
            lane: 1,
            from_m,
            to_m,
        }
    }

    #[test]
    fn no_vehicles_no_pulses() {
        assert!(detector_events(&[], &CorridorConfig::default()).is_empty());
    }

    #[test]
    fn queued_vehicle_is_silent() {
        let cfg = CorridorConfig::default();
        assert!(detector_events(&[mv(0.0, 0.0), mv(40.0, 38.6)], &cfg).is_empty());
    }

    #[test]
    fn single_vehicle_passes_both_detectors() {
        let cfg = CorridorConfig::default();
        let mut trap = 0i64;
        let mut pos = 60.0;
        let mut pulses = Vec::new();
        while pos > -5.0 {
            let next = pos - cfg.free_speed_mps * cfg.time_step_s;
            for e in detector_events(&[mv(pos, next)], &cfg) {
                trap += match e.kind {
                    DetectorKind::Upstream => 1,
                    DetectorKind::StopLine => -1,
                };
                assert!(trap >= 0);
                pulses.push(e.kind);
            }
            pos = next;
        }
        assert_eq!(pulses, vec![DetectorKind::Upstream, DetectorKind::StopLine]);
        assert_eq!(trap, 0);
    }

    #[test]
    fn large_step_can_cross_both_at_once() {
        let cfg = CorridorConfig::default();
        let events = detector_events(&[mv(30.0, -1.0)], &cfg);
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].kind, DetectorKind::Upstream);
    }
}
