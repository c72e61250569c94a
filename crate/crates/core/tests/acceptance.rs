//! Acceptance criteria 1 to 10. Each test prints one `PASS` or `FAIL` line
//! (written straight to stderr so it shows without `--nocapture`) and then
//! asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use exobench::comfort::{
    aggregate_group, compare_maps, relative_change_pct, score_region, write_comfort_csv, Intensity, PressureMark,
    Region, TorsoTemplate,
};
use exobench::controller::{HysteresisController, PressureRegulator, SafetyLimits, ValveCommand};
use exobench::emg::{hampel_correct, mdf_series, mdf_trend, preprocess, ActivationWindow, EmgConfig, MdfSeries, EMG_FS};
use exobench::kinematics::{elbow_flexion, shoulder_azimuth, shoulder_elevation, Quaternion, Side};
use exobench::plant::{step_pneumatics, ActuatorState, PlantParams, CONTROL_DECIMATION, PHYSICS_DT};
use exobench::session::analysis::{analyze_session, AnalysisOptions, SessionReport};
use exobench::session::{simulate_session, Config};
use exobench::stats::{
    bh_adjust, chi2_survival, effect_size_r, friedman, wilcoxon_differences, NConvention, WilcoxonMode,
};
use exobench::telemetry::{
    decode_frame, encode_frame, CtrlPayload, EmgPayload, ImuPayload, Payload, PressurePayload, TelemetryFrame,
};
use exobench::controller::ControlMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, title: &str, checks: &[(bool, String)]) {
    let ok = checks.iter().all(|(c, _)| *c);
    let detail: Vec<&str> = checks.iter().map(|(_, d)| d.as_str()).collect();
    let line = format!("{} criterion {n:>2}: {title} [{}]\n", if ok { "PASS" } else { "FAIL" }, detail.join("; "));
    let _ = std::io::stderr().write_all(line.as_bytes());
    for (c, d) in checks {
        assert!(*c, "criterion {n}: {d}");
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ----------------------------------------------------------------------------

/// Two-sided exact p by brute force over all 2^n sign patterns.
fn brute_force_p(d: &[f64]) -> f64 {
    let n = d.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].abs().partial_cmp(&d[b].abs()).unwrap());
    let mut rank = vec![0.0; n];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = (r + 1) as f64;
    }
    let w_obs: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| rank[i]).sum();
    let centre = (n * (n + 1)) as f64 / 4.0;
    let dev = (w_obs - centre).abs();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| rank[i]).sum();
        if (w - centre).abs() >= dev - 1e-12 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

#[test]
fn criterion_01_exact_wilcoxon() {
    let t0 = Instant::now();
    let pos: Vec<f64> = (1..=8).map(|i| i as f64 * 1.5).collect();
    let mut flip = pos.clone();
    flip[0] = -flip[0];
    let a = wilcoxon_differences(&pos, WilcoxonMode::Exact).unwrap();
    let b = wilcoxon_differences(&flip, WilcoxonMode::Exact).unwrap();
    let elapsed = t0.elapsed();
    verdict(
        1,
        "exact Wilcoxon n=8",
        &[
            (a.p == 0.0078125 && brute_force_p(&pos) == 0.0078125, format!("all positive p={}", a.p)),
            (b.p == 0.015625 && brute_force_p(&flip) == 0.015625, format!("smallest flipped p={}", b.p)),
            (a.exact && b.exact, "exact enumeration used".into()),
            (elapsed < Duration::from_secs(1), format!("{:.2} ms", elapsed.as_secs_f64() * 1e3)),
        ],
    );
}

#[test]
fn criterion_02_bh_chain() {
    let a = bh_adjust(&[0.0078125, 0.0078125, 0.2]).unwrap();
    let b = bh_adjust(&[0.0078125, 0.3, 0.6]).unwrap();
    let c = bh_adjust(&[0.015625, 0.4, 0.7]).unwrap();
    // step-up oracle: min over k >= i of m·p(k)/k
    let oracle = |p: &[f64], i: usize| -> f64 {
        let mut s: Vec<f64> = p.to_vec();
        s.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let m = s.len() as f64;
        let r = s.iter().position(|&v| v == p[i]).unwrap();
        (r..s.len()).map(|k| m * s[k] / (k + 1) as f64).fold(1.0, f64::min)
    };
    verdict(
        2,
        "BH p-chain",
        &[
            (close(a[0], 0.0117, 1e-4) && close(a[1], 0.0117, 1e-4), format!("{:.4} {:.4}", a[0], a[1])),
            (close(b[0], 0.0234, 1e-4), format!("{:.4}", b[0])),
            (close(c[0], 0.0469, 1e-4), format!("{:.4}", c[0])),
            (close(a[0], oracle(&[0.0078125, 0.0078125, 0.2], 0), 1e-15), "matches step-up oracle".into()),
        ],
    );
}

#[test]
fn criterion_03_effect_size() {
    let d: Vec<f64> = (1..=8).map(|i| i as f64).collect();
    let w = wilcoxon_differences(&d, WilcoxonMode::Normal).unwrap();
    // untied n=8: mean 18, variance 8·9·17/24 = 51
    let z_oracle = (36.0 - 18.0) / 51.0f64.sqrt();
    let es = effect_size_r(w.z, 8, NConvention::TotalObservations);
    verdict(
        3,
        "effect size anchor",
        &[
            (close(w.z, 2.5205, 5e-5) && close(w.z, z_oracle, 1e-12), format!("Z={:.4}", w.z)),
            (close(es.r, 0.630, 0.005) && close(es.r, z_oracle / 4.0, 1e-12), format!("r={:.3}", es.r)),
        ],
    );
}

#[test]
fn criterion_04_chi_square_and_friedman() {
    let anchors = [
        (13.0, 0.0015),
        (12.3, 0.0022),
        (12.0, 0.0025),
        (10.3, 0.0058),
        (9.8, 0.0076),
        (6.3, 0.044),
        (5.4, 0.066),
    ];
    let mut checks = Vec::new();
    for (x, p_table) in anchors {
        let p = chi2_survival(x, 2);
        let closed = (-x / 2.0f64).exp();
        checks.push((
            close(p, closed, 1e-12) && (p - p_table).abs() / p_table <= 0.05,
            format!("chi2={x}: {p:.4}"),
        ));
    }
    let perfect: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 10.0 + i as f64, 20.0 + i as f64]).collect();
    let f = friedman(&perfect).unwrap();
    checks.push((f.chi2 == 16.0, format!("perfect ordering chi2={}", f.chi2)));
    verdict(4, "chi-square tails and Friedman", &checks);
}

// ----------------------------------------------------------------------------

fn sine_epochs(freqs: &[f64], epoch_s: f64) -> Vec<f64> {
    let n_epoch = (epoch_s * EMG_FS) as usize;
    let mut phase = 0.0f64;
    let mut x = Vec::with_capacity(freqs.len() * n_epoch);
    for &f in freqs {
        for _ in 0..n_epoch {
            x.push(phase.sin());
            phase += 2.0 * std::f64::consts::PI * f / EMG_FS;
        }
    }
    x
}

#[test]
fn criterion_05_mdf_suite() {
    let t0 = Instant::now();
    let cfg = EmgConfig::default();

    let pure = sine_epochs(&[100.0; 2], 5.0);
    let w10 = ActivationWindow { duration: 10.0, offset: 0.0 };
    let s = mdf_series(&pure, EMG_FS, w10, cfg.spectrum).unwrap();
    let pure_ok = s.mdf_hz.iter().all(|&f| close(f, 100.0, 0.25));

    // 12 stationary 5 s epochs stepping from 100 to 80 Hz
    let freqs: Vec<f64> = (0..12).map(|e| 100.0 - 20.0 * e as f64 / 11.0).collect();
    let x = sine_epochs(&freqs, 5.0);
    let filtered = preprocess(&x, EMG_FS, &cfg).unwrap();
    let raw = mdf_series(&filtered, EMG_FS, ActivationWindow { duration: 60.0, offset: 0.0 }, cfg.spectrum).unwrap();
    let h = hampel_correct(&raw.mdf_hz, cfg.hampel_half_window, cfg.hampel_sigma);
    let trend = mdf_trend(&MdfSeries { epoch_times: raw.epoch_times.clone(), mdf_hz: h.values }).unwrap();

    let mut spiky = vec![42.0; 60];
    for i in [3, 17, 18, 40, 59] {
        spiky[i] += if i % 2 == 0 { 35.0 } else { -28.0 };
    }
    let restored = hampel_correct(&spiky, 3, 3.0);
    let hampel_ok = restored.values.iter().all(|&v| (v - 42.0).abs() <= 1e-9);
    let elapsed = t0.elapsed();
    verdict(
        5,
        "MDF suite",
        &[
            (pure_ok, format!("100 Hz sine MDF {:?}", s.mdf_hz)),
            (close(trend.mdf_delta_pct, -20.0, 2.0), format!("drift MDFdelta={:.2}%", trend.mdf_delta_pct)),
            (trend.slope < 0.0, format!("slope={:.3}%/s", trend.slope)),
            (hampel_ok, "Hampel restores constant".into()),
            (elapsed < Duration::from_secs(10), format!("{:.2} s", elapsed.as_secs_f64())),
        ],
    );
}

// ----------------------------------------------------------------------------

fn closed_loop(reg: &mut PressureRegulator, params: &PlantParams, seconds: f64) -> Vec<(f64, f64)> {
    let mut act = ActuatorState::default();
    let mut cmd = ValveCommand::CLOSED;
    let mut out = Vec::new();
    for k in 0..(seconds / PHYSICS_DT).round() as usize {
        if k % CONTROL_DECIMATION == 0 {
            cmd = reg.tick(act.pressure).unwrap();
        }
        act = step_pneumatics(act, cmd, PHYSICS_DT, params).unwrap();
        out.push(((k + 1) as f64 * PHYSICS_DT, act.pressure));
    }
    out
}

#[test]
fn criterion_06_controller_plant() {
    let params = PlantParams::default();
    let mut reg = PressureRegulator::new(HysteresisController::new(70.0, 2.0).unwrap(), SafetyLimits::default());
    let trace = closed_loop(&mut reg, &params, 15.0);
    let last_out = trace.iter().rposition(|&(_, p)| (p - 70.0).abs() > 2.0);
    let settle = last_out.map_or(0.0, |i| trace[i].0);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut reg = PressureRegulator::new(HysteresisController::new(35.0, 2.0).unwrap(), SafetyLimits::default());
    let mut violations = 0u64;
    for k in 0..1_000_000u64 {
        if k % 997 == 0 {
            reg.set_setpoint(rng.gen_range(0.0..70.0));
        }
        if k % 50_000 == 0 {
            reg.reset_fault();
        }
        let c = reg.tick(rng.gen_range(-5.0..90.0)).unwrap();
        if (c.inflate_open && c.vent_open) || (c.exhaust_open && c.pump_on) {
            violations += 1;
        }
    }

    let limits = SafetyLimits { p_max: 60.0, margin: 3.0 };
    let mut reg = PressureRegulator::new(HysteresisController::new(70.0, 2.0).unwrap(), limits);
    let trace = closed_loop(&mut reg, &params, 30.0);
    let trip = trace.iter().position(|&(_, p)| p > 63.0).map(|i| trace[i].0);
    let vented = trip.and_then(|t0| trace.iter().find(|&&(t, p)| t > t0 && p < 5.0).map(|&(t, _)| t - t0));
    verdict(
        6,
        "controller and plant closed loop",
        &[
            (settle <= 5.0, format!("settled to 70±2 kPa at {settle:.2} s")),
            (violations == 0, format!("{violations} exclusion violations in 1e6 ticks")),
            (reg.fault.is_some(), "overpressure latched".into()),
            (vented.is_some_and(|d| d <= 10.0), vented.map_or("never vented below 5 kPa".into(), |d| format!("vented below 5 kPa after {d:.2} s"))),
        ],
    );
}

// ----------------------------------------------------------------------------

fn rz(deg: f64) -> Quaternion {
    Quaternion::from_axis_angle([0.0, 0.0, 1.0], deg)
}
fn ry(deg: f64) -> Quaternion {
    Quaternion::from_axis_angle([0.0, 1.0, 0.0], deg)
}
fn rx(deg: f64) -> Quaternion {
    Quaternion::from_axis_angle([1.0, 0.0, 0.0], deg)
}

#[test]
fn criterion_07_kinematics() {
    let side = Side::Right;
    let s = side.lateral_sign();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_script = 0.0f64;
    let mut worst_invariance = 0.0f64;
    for _ in 0..2000 {
        let (el, az, efe) = (rng.gen_range(20.0..170.0), rng.gen_range(-170.0..170.0), rng.gen_range(0.0..150.0));
        let (yaw, twist) = (rng.gen_range(-180.0..180.0), rng.gen_range(-90.0..90.0));
        // elevate forward, swing about the vertical, twist about the long axis
        let torso = rz(yaw);
        let arm = torso * rz(s * az) * ry(-el) * rz(twist);
        let fore = arm * rx(efe);
        let got_el = shoulder_elevation(arm).unwrap();
        let got_az = shoulder_azimuth(torso, arm, got_el, side).unwrap();
        let got_efe = elbow_flexion(arm, fore).unwrap();
        let daz = ((got_az - az + 540.0) % 360.0 - 180.0).abs();
        worst_script = worst_script.max((got_el - el).abs()).max(daz).max((got_efe - efe).abs());

        let g = Quaternion::from_axis_angle(
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.1..1.0)],
            rng.gen_range(-180.0..180.0),
        );
        let (t2, a2, f2) = (g * torso, g * arm, g * fore);
        let az2 = shoulder_azimuth(t2, a2, 90.0, side).unwrap();
        let az1 = shoulder_azimuth(torso, arm, 90.0, side).unwrap();
        let efe2 = elbow_flexion(a2, f2).unwrap();
        let el_yaw = shoulder_elevation(rz(rng.gen_range(-180.0..180.0)) * arm).unwrap();
        let d_az = ((az2 - az1 + 540.0) % 360.0 - 180.0).abs();
        worst_invariance = worst_invariance.max(d_az).max((efe2 - got_efe).abs()).max((el_yaw - got_el).abs());
    }
    verdict(
        7,
        "kinematics",
        &[
            (worst_script <= 0.1, format!("max scripted error {worst_script:.2e} deg")),
            (worst_invariance <= 1e-6, format!("max invariance error {worst_invariance:.2e} deg")),
        ],
    );
}

// ----------------------------------------------------------------------------

fn comparison<'a>(r: &'a SessionReport, outcome: &str, cond: &str) -> Option<&'a exobench::stats::TestResult> {
    r.outcome(outcome)?.comparisons.iter().find(|c| c.condition == cond)
}

#[test]
fn criterion_08_end_to_end() {
    let t0 = Instant::now();
    let cfg = Config::default();
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_session(&cfg, 7, dir.path()).unwrap();
    let opts = AnalysisOptions { write_derived: false, ..AnalysisOptions::default() };
    let report = analyze_session(&sim.store, &opts).unwrap();
    let elapsed = t0.elapsed();
    let alpha = 0.05;
    let mut checks = vec![(report.participants.len() == 8, format!("{} subjects", report.participants.len()))];

    for plane in ["abduction", "flexion"] {
        for v in ["v1_on", "v2_on"] {
            let c = comparison(&report, &format!("static_hold.endurance_s.{plane}"), v);
            checks.push((
                c.is_some_and(|c| c.reference == "off" && c.hl_estimate > 0.0 && c.p_fdr < alpha),
                format!("{plane} endurance {v}-off HL={:+.1} s p_fdr={:.4}", c.map_or(f64::NAN, |c| c.hl_estimate), c.map_or(f64::NAN, |c| c.p_fdr)),
            ));
        }
    }
    for (plane, agonist) in [("abduction", "MD"), ("flexion", "AD")] {
        for v in ["v1_on", "v2_on"] {
            let c = comparison(&report, &format!("static_hold.pct_mvc.{plane}.{agonist}"), v);
            checks.push((
                c.is_some_and(|c| c.hl_estimate < 0.0 && c.p_fdr < alpha),
                format!("{plane} {agonist} %MVC {v}-off HL={:+.2}", c.map_or(f64::NAN, |c| c.hl_estimate)),
            ));
        }
    }
    let margin = cfg.synthetic.haa_restriction_v1_deg - cfg.synthetic.haa_restriction_v2_deg;
    let haa = report
        .outcome("transparency.rom_deg.horizontal_adduction")
        .and_then(|o| o.comparisons.iter().find(|c| c.reference == "v1_on" && c.condition == "v2_on"));
    checks.push((
        haa.is_some_and(|c| close(c.hl_estimate, margin, 5.0) && c.p_fdr < alpha),
        format!("HAA ROM v2-v1 HL={:.2} deg (margin {margin})", haa.map_or(f64::NAN, |c| c.hl_estimate)),
    ));
    checks.push((elapsed < Duration::from_secs(120), format!("{:.1} s", elapsed.as_secs_f64())));
    verdict(8, "end-to-end synthetic study", &checks);
}

// ----------------------------------------------------------------------------

/// Frame encoder written directly from the wire layout, used as the oracle.
fn oracle_encode(stream: u8, seq: u32, t_us: u64, payload: &[u8]) -> Vec<u8> {
    let mut b = vec![0xE5, 0x0B, stream];
    b.extend_from_slice(&seq.to_le_bytes());
    b.extend_from_slice(&t_us.to_le_bytes());
    b.extend_from_slice(&(payload.len() as u16).to_le_bytes());
    b.extend_from_slice(payload);
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_le_bytes());
    b
}

fn unit_quat(rng: &mut ChaCha8Rng) -> [f32; 4] {
    loop {
        let q: [f32; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|c| c * c).sum::<f32>().sqrt();
        if n > 0.1 {
            return q.map(|c| c / n);
        }
    }
}

fn random_frame(rng: &mut ChaCha8Rng) -> TelemetryFrame {
    let payload = match rng.gen_range(0..5) {
        0 => Payload::Imu(ImuPayload {
            q_torso: unit_quat(rng),
            q_upper_arm: unit_quat(rng),
            q_forearm: unit_quat(rng),
            calib: rng.gen(),
        }),
        1 => Payload::Pressure(PressurePayload { kpa: rng.gen_range(0.0..70.0) }),
        2 => Payload::Emg(EmgPayload {
            ad: std::array::from_fn(|_| rng.gen_range(-5.0..5.0)),
            md: std::array::from_fn(|_| rng.gen_range(-5.0..5.0)),
            pd: std::array::from_fn(|_| rng.gen_range(-5.0..5.0)),
        }),
        3 => {
            let mode = [ControlMode::Holding, ControlMode::Inflating, ControlMode::Venting][rng.gen_range(0..3)];
            Payload::Ctrl(CtrlPayload { valves: mode.command(), mode })
        }
        _ => {
            let n = rng.gen_range(0..64);
            Payload::event_json(&serde_json::json!({ "kind": "note", "n": n, "text": "x".repeat(n) }))
        }
    };
    TelemetryFrame::new(rng.gen(), rng.gen(), payload)
}

#[test]
fn criterion_09_telemetry() {
    let golden = "e50b040100000088130000000000000200050105740ec4";
    let ctrl = TelemetryFrame::new(
        1,
        5000,
        Payload::Ctrl(CtrlPayload { valves: ValveCommand::INFLATE, mode: ControlMode::Inflating }),
    );
    let enc = encode_frame(&ctrl).unwrap();
    let hex: String = enc.iter().map(|b| format!("{b:02x}")).collect();
    let oracle = oracle_encode(4, 1, 5000, &enc[17..19]);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = 0u32;
    for _ in 0..100_000 {
        let f = random_frame(&mut rng);
        let bytes = encode_frame(&f).unwrap();
        if decode_frame(&bytes).ok().as_ref() != Some(&f) {
            failures += 1;
        }
    }
    verdict(
        9,
        "telemetry framing",
        &[
            (hex == golden, format!("golden CTRL frame {hex}")),
            (enc == oracle, "matches layout oracle".into()),
            (failures == 0, format!("{failures} round-trip failures in 1e5 frames")),
        ],
    );
}

// ----------------------------------------------------------------------------

#[test]
fn criterion_10_comfort_scoring() {
    let t = TorsoTemplate::canonical();
    let flank = t.mask(Region::Flank);
    let n = flank.len();
    let (n_light, n_painful) = (n / 4, n / 10);
    let marks = vec![
        PressureMark { cells: flank[..n_light].to_vec(), intensity: Intensity::Light },
        PressureMark { cells: flank[n_light..n_light + n_painful].to_vec(), intensity: Intensity::Painful },
    ];
    let score = score_region(&marks, &t, Region::Flank).unwrap();
    let by_count = (n_light * 1 + n_painful * 3) as f64 / n as f64;

    let upper = t.mask(Region::UpperArm);
    let coverage = |frac: f64| {
        let k = (frac * upper.len() as f64).round() as usize;
        let m = vec![PressureMark { cells: upper[..k].to_vec(), intensity: Intensity::Light }];
        Region::ALL.iter().map(|&r| (r, score_region(&m, &t, r).unwrap())).collect()
    };
    let g1 = aggregate_group(&[coverage(0.25)]).unwrap();
    let g2 = aggregate_group(&[coverage(0.38)]).unwrap();
    let cmp = compare_maps(&g1, &g2);
    let ua = cmp.iter().find(|c| c.region == Region::UpperArm).unwrap();
    let mut csv = Vec::new();
    write_comfort_csv(&mut csv, &cmp).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    verdict(
        10,
        "comfort scoring",
        &[
            (score == 0.55 && score == by_count, format!("mixed fixture {score}")),
            (ua.v1_mean == 0.25 && ua.v2_mean == 0.38, format!("upper arm {} -> {}", ua.v1_mean, ua.v2_mean)),
            (ua.rel_change_pct.is_some_and(|r| close(r, 52.0, 1e-9)), format!("upper arm change {:+.1}%", ua.rel_change_pct.unwrap_or(f64::NAN))),
            (relative_change_pct(0.25, 0.38).is_some_and(|r| close(r, 52.0, 1e-9)), "arithmetic anchor".into()),
            (csv.contains("upper_arm,v2,0.3800,52.0"), "report row".into()),
        ],
    );
}
