#![allow(dead_code)]

use tlc_core::*;

/// Record at `time` with the given queue contents; everything else neutral.
pub fn record(time: f64, seq: u32, kind: EventKind, flow: u8, x: [f64; 4], u1: bool) -> Record {
    let mut state = State::initial();
    state.t = time;
    state.x = x;
    state.u1 = u1;
    EventRecord {
        time,
        seq,
        kind,
        flow,
        cause: None,
        alpha: [0.2; 4],
        h: 1.2,
        region_before: Region::X0,
        region_after: Region::X0,
        p_before: [false; 2],
        p_after: [false; 2],
        state,
        tie: None,
    }
}

pub fn fluid_trace(records: Vec<Record>, horizon: f64) -> Trace {
    Trace {
        mode: SimMode::Fluid,
        policy: Policy::QuasiDynamic,
        seed: 0,
        params: Params::initial(),
        weights: [1.0; 4],
        horizon,
        records,
        neps: Default::default(),
        cost: 0.0,
        diagnostics: Default::default(),
    }
}

/// Interarrival times `[6, 6, 10, 20]`, the moderate load of the oracle checks.
pub fn moderate(mode: SimMode, seed: u64) -> ArrivalProcessSpec {
    ArrivalProcessSpec::from_interarrival(mode, [6.0, 6.0, 10.0, 20.0], seed)
}
