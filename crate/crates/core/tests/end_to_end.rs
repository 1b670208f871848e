use metertwin::bench::{run_scenario, LoadSegment, Scenario};
use metertwin::protocol::{self, di, handle_request, request};
use metertwin::registers::{to_hundredths, FreezeKind, MeterState};
use metertwin::waveform::{PhaseSpec, WaveformSpec};

fn scenario(segments: Vec<LoadSegment>) -> Scenario {
    let mut sc = Scenario::from_json(
        r#"{"name": "e2e", "start": "2024-05-06T06:30:00", "step_s": 30, "segments": [{"duration_s": 60, "outage": true}]}"#,
    )
    .unwrap();
    sc.segments = segments;
    sc
}

fn load(duration_s: i64, i_rms: f64, phi: f64) -> LoadSegment {
    LoadSegment {
        duration_s,
        waveform: Some(WaveformSpec::balanced(50.0, PhaseSpec::sinusoidal(230.0, i_rms, phi))),
        outage: false,
    }
}

#[test]
fn split_run_resumes_to_the_same_state() {
    let first = vec![load(3_600, 4.0, 20.0), load(1_800, 1.0, -30.0)];
    let second = vec![load(2_400, 8.0, 200.0), load(3_600, 2.0, 0.0)];
    let whole = run_scenario(&scenario([first.clone(), second.clone()].concat()), None).unwrap();

    let head = run_scenario(&scenario(first), None).unwrap();
    let restored = MeterState::from_json(&head.state.to_json()).unwrap();
    let tail = run_scenario(&scenario(second), Some(restored)).unwrap();

    assert_eq!(tail.state.to_json(), whole.state.to_json());
    assert_eq!(tail.summary, whole.summary);
}

#[test]
fn protocol_reads_agree_with_registers() {
    let out = run_scenario(&scenario(vec![load(7_200, 5.0, 30.0), load(600, 3.0, 180.0)]), None).unwrap();
    let mut m = out.state;
    assert!(m.bank.active_rev > 0);
    for (id, units) in [(di::ACTIVE_FWD, m.bank.active_fwd), (di::ACTIVE_REV, m.bank.active_rev)] {
        let resp = handle_request(&request::read(m.address, id), &mut m).unwrap();
        assert_eq!(resp.control, 0x91);
        assert_eq!(protocol::decode_bcd(&resp.payload[4..]).unwrap(), to_hundredths(units));
    }
    for (rate, &units) in m.bank.per_rate_fwd.clone().iter().enumerate() {
        let resp = handle_request(&request::read(m.address, di::ACTIVE_FWD | (rate as u32 + 1)), &mut m).unwrap();
        assert_eq!(protocol::decode_bcd(&resp.payload[4..]).unwrap(), to_hundredths(units));
    }
    let resp = handle_request(&request::read(m.address, di::CLOCK), &mut m).unwrap();
    assert_eq!(protocol::decode_time(&resp.payload[4..]).unwrap(), m.clock);
}

#[test]
fn scheduled_freezes_are_readable_over_the_protocol() {
    let out = run_scenario(&scenario(vec![load(3 * 3_600, 5.0, 0.0)]), None).unwrap();
    let mut m = out.state;
    assert_eq!(m.freezes.count(FreezeKind::Hourly), 3);
    let latest = m.freezes.recent(FreezeKind::Hourly, 1).unwrap().clone();
    let id = di::FREEZE_BASE | (u32::from(FreezeKind::Hourly.code()) << 8) | 1;
    let resp = handle_request(&request::read(m.address, id), &mut m).unwrap();
    let fwd = protocol::decode_bcd(&resp.payload[9..13]).unwrap();
    assert_eq!(fwd, to_hundredths(latest.bank.active_fwd));
}
