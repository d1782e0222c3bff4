//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use aquarium_core::control::{Controller, ControlConfig, JamConfig};
use aquarium_core::domain::{
    default_rules, violates, ActuatorCommand, AlertEvent, AlertKind, CommandSource, Direction, EventPayload,
    EventRecord, Monotonic, ParameterKind, ParameterReading, Quality, RuleAction, Timestamp,
};
use aquarium_core::eventlog::{list_segments, replay_run, EventLog};
use aquarium_core::metrics::{
    self, accuracy, alert_quality, EvalConfig, GroundTruthTrace, MetricsReport, TraceSample,
};
use aquarium_core::plant::{
    sample, NoiseModel, Pacing, Perturbation, PerturbationKind, PlantConfig, PlantState, Script,
};
use aquarium_core::signal::{calibrate, process, CalibrationCurve, SmoothingWindow};
use aquarium_core::station::{run_simulation, SimulationConfig, DEFAULT_EPOCH};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: impl Into<String>) -> Outcome {
    let detail = detail.into();
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v}%"))
}

fn io<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn t(s: f64) -> Timestamp {
    Timestamp::from_millis(DEFAULT_EPOCH.as_millis() + (s * 1000.0).round() as i64)
}

/// Runs a simulation and evaluates it against its own trace.
fn run_and_evaluate(cfg: SimulationConfig) -> Result<(MetricsReport, aquarium_core::station::RunSummary), String> {
    let dir = cfg.log_dir.clone();
    let run_id = cfg.run_id.clone();
    let summary = run_simulation(cfg).map_err(io)?;
    let trace = GroundTruthTrace::load(summary.trace_path.as_deref().ok_or("no trace written")?).map_err(io)?;
    let run = replay_run(&dir, &run_id).map_err(io)?;
    let report = metrics::evaluate(&trace, &run.records, run.corrupt.len(), &EvalConfig::default());
    Ok((report, summary))
}

fn cooldown_exactness() -> Outcome {
    let dir = tempfile::tempdir().map_err(io)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut alerts, mut suppressed, mut worst) = (0usize, 0usize, f64::INFINITY);
    for run in 0..3 {
        let mut entries = Vec::new();
        for _ in 0..rng.random_range(4..10) {
            let start = rng.random_range(0.0..22.0 * 3600.0);
            let kind = match rng.random_range(0..5) {
                0 => PerturbationKind::Heater {
                    rate_c_per_min: rng.random_range(0.2..1.0),
                    duration_s: rng.random_range(300.0..1200.0),
                },
                1 => PerturbationKind::Vinegar { ph_drop: rng.random_range(0.5..2.0), over_s: rng.random_range(10.0..600.0) },
                2 => PerturbationKind::Soil { turbidity_rise: rng.random_range(40.0..200.0), over_s: rng.random_range(30.0..900.0) },
                3 => PerturbationKind::NetworkOutage { duration_s: rng.random_range(5.0..120.0) },
                _ => PerturbationKind::Refill,
            };
            entries.push(Perturbation::new(start, kind));
        }
        if run == 1 {
            entries.push(Perturbation::new(12.0 * 3600.0, PerturbationKind::PowerCycle { duration_s: 27.0 }));
        }
        let mut noise = NoiseModel { seed: rng.random(), ..NoiseModel::default() };
        // extra noise makes readings chatter across the bounds
        for s in noise.sigma.values_mut() {
            *s *= 3.0;
        }
        let run_id = format!("fuzz{run}");
        let cfg = SimulationConfig {
            duration_s: 24.0 * 3600.0,
            script: Script::new(entries).map_err(io)?,
            noise,
            write_trace: false,
            ..SimulationConfig::new(run_id.clone(), dir.path())
        };
        run_simulation(cfg).map_err(io)?;
        let log = replay_run(dir.path(), &run_id).map_err(io)?.records;
        let mut last: BTreeMap<(AlertKind, Direction), Timestamp> = BTreeMap::new();
        for rec in &log {
            match &rec.payload {
                EventPayload::Alert(a) => {
                    alerts += 1;
                    if let Some(prev) = last.insert((a.kind, a.direction), a.timestamp) {
                        worst = worst.min(a.timestamp.seconds_since(prev));
                    }
                }
                EventPayload::AlertSuppressed { .. } => suppressed += 1,
                _ => {}
            }
        }
    }
    check(
        worst >= 600.0 && suppressed > 0,
        format!("{alerts} alerts, {suppressed} suppressed, min same-key spacing {worst} s"),
    )
}

fn smoothing_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut compared = 0u64;
    for _ in 0..100_000 {
        let kind = ParameterKind::ALL[rng.random_range(0..ParameterKind::ALL.len())];
        let (lo, hi) = kind.range();
        // curve wider than the physical range so some samples are invalid
        let span = hi - lo;
        let curve = aquarium_core::signal::fit_curve(kind, (0, lo - 0.1 * span), (4095, hi + 0.1 * span)).map_err(io)?;
        let mut window = SmoothingWindow::new(kind);
        let mut accepted: Vec<f64> = Vec::new();
        for i in 0..rng.random_range(1..20u64) {
            let counts: u16 = rng.random_range(0..=4095);
            let reading = process(&aquarium_core::domain::RawSample::new(kind, counts, Monotonic(i)), &curve, &mut window, t(i as f64))
                .map_err(io)?;
            let raw = curve.slope * f64::from(counts) + curve.intercept;
            if raw < lo || raw > hi {
                if reading.quality != Quality::Invalid {
                    return Err(format!("out-of-range {raw} accepted"));
                }
                continue;
            }
            accepted.push(raw);
            let tail = &accepted[accepted.len().saturating_sub(5)..];
            let mut mean = 0.0;
            for v in tail {
                mean += v;
            }
            mean /= tail.len() as f64;
            let rel = (reading.value - mean).abs() / mean.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(if mean == 0.0 { reading.value.abs() } else { rel });
            compared += 1;
        }
    }
    check(worst <= 1e-9, format!("{compared} outputs, max relative error {worst:e}"))
}

fn calibration_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noise = NoiseModel::noiseless(1);
    let mut worst_ratio = 0.0f64;
    for _ in 0..10_000 {
        let r = |rng: &mut ChaCha8Rng, k: ParameterKind| {
            let (lo, hi) = k.range();
            rng.random_range(lo..=hi)
        };
        let state = PlantState {
            water_temp: r(&mut rng, ParameterKind::WaterTemperature),
            air_temp: r(&mut rng, ParameterKind::AirTemperature),
            humidity: r(&mut rng, ParameterKind::Humidity),
            ph: r(&mut rng, ParameterKind::Ph),
            tds: r(&mut rng, ParameterKind::Tds),
            turbidity: r(&mut rng, ParameterKind::Turbidity),
            food_depth: r(&mut rng, ParameterKind::FoodDistance),
            pump_on: true,
            sim_time: 0.0,
        };
        for kind in ParameterKind::ALL {
            let curve = CalibrationCurve::default_for(kind);
            let raw = sample(&state, kind, &noise, &curve, Monotonic::ZERO, &mut rng).ok_or("noiseless sample dropped")?;
            let value = calibrate(&raw, &curve).map_err(io)?;
            let err = (value - state.value(kind)).abs();
            worst_ratio = worst_ratio.max(err / curve.resolution());
        }
    }
    check(worst_ratio <= 1.0, format!("70000 samples, max error {worst_ratio:.3} counts"))
}

fn threshold_truth_table() -> Outcome {
    const EPS: f64 = 1e-6;
    let mut cases = 0;
    for rule in default_rules() {
        if let Some(l) = rule.lower {
            for (v, want) in [(l - EPS, Some(Direction::BelowLower)), (l, None), (l + EPS, None)] {
                cases += 1;
                if violates(&rule, v) != want {
                    return Err(format!("{} at {v}", rule.kind));
                }
            }
        }
        if let Some(u) = rule.upper {
            for (v, want) in [(u - EPS, None), (u, None), (u + EPS, Some(Direction::AboveUpper))] {
                cases += 1;
                if violates(&rule, v) != want {
                    return Err(format!("{} at {v}", rule.kind));
                }
            }
        }
    }
    // five two-sided bands and two upper-only rules
    let feed = default_rules().into_iter().find(|r| r.action == RuleAction::AllowFeeding).ok_or("no feeding rule")?;
    let gate_ok = feed.upper == Some(5.0) && violates(&feed, 5.0 - EPS).is_none() && violates(&feed, 5.0 + EPS).is_some();
    check(cases == 5 * 6 + 2 * 3 && gate_ok, format!("{cases} boundary cases"))
}

fn alert_quality_standard(report: &MetricsReport) -> Outcome {
    let q = &report.alerts;
    let (p, r) = (q.precision_pct.unwrap_or(0.0), q.recall_pct.unwrap_or(0.0));
    check(
        p >= 95.0 && r >= 96.0,
        format!("precision {p:.2}% ({}/{}), recall {r:.2}% ({}/{})", q.true_positive_alerts, q.alerts, q.detected_episodes, q.episodes),
    )
}

fn detection_latency(report: &MetricsReport, dir: &Path) -> Outcome {
    let p95 = report.latency_p95_s.ok_or("no latencies")?;
    let cfg = SimulationConfig {
        duration_s: 20.0,
        pacing: Pacing::Speedup(1.0),
        script: Script::empty(),
        write_trace: false,
        ..SimulationConfig::new("paced", dir)
    };
    let wall = Instant::now();
    let s = run_simulation(cfg).map_err(io)?;
    let elapsed = wall.elapsed();
    check(
        p95 <= 25.0 && s.timing.max < Duration::from_secs(1) && elapsed >= Duration::from_secs(19),
        format!(
            "p95 {p95:.2} s, worst cycle {:?} over {} cycles at real time",
            s.timing.max, s.timing.cycles
        ),
    )
}

fn recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(io)?;
    let quiet = |run: &str, p: Perturbation| -> Result<SimulationConfig, String> {
        Ok(SimulationConfig {
            duration_s: 3600.0,
            script: Script::new(vec![p]).map_err(io)?,
            ..SimulationConfig::new(run, dir.path())
        })
    };
    let (net, _) = run_and_evaluate(quiet("net", Perturbation::new(900.0, PerturbationKind::NetworkOutage { duration_s: 26.0 }))?)?;
    let (pow, _) = run_and_evaluate(quiet("pow", Perturbation::new(900.0, PerturbationKind::PowerCycle { duration_s: 27.0 }))?)?;
    let segments = list_segments(dir.path(), "pow").map_err(io)?.len();
    let n = net.recovery.network_s.first().copied().unwrap_or(f64::NAN);
    let ps = pow.recovery.power_s.first().copied().unwrap_or(f64::NAN);
    check(
        (26.0..=30.0).contains(&n) && segments == 2 && ps >= 27.0 && pow.recovery.records_lost > 0,
        format!("network {n} s, power {ps} s, {segments} segments, {} records lost", pow.recovery.records_lost),
    )
}

fn endurance_accounting() -> Outcome {
    let dir = tempfile::tempdir().map_err(io)?;
    let cfg = ControlConfig {
        feed_schedule: vec![],
        jam: JamConfig { probability: 0.01, after_cycles: 0, seed: 17 },
        ..ControlConfig::default()
    };
    let mut ctl = Controller::new(&cfg).map_err(io)?;
    let mut log = EventLog::create(dir.path(), "endurance").map_err(io)?;
    for i in 0..600 {
        let now = t(i as f64 * 60.0);
        let reading = ParameterReading { kind: ParameterKind::FoodDistance, value: 1.0, timestamp: now, quality: Quality::Valid };
        for (at, p) in ctl.poll_cycle(&[reading], now).records {
            log.append(at, p).map_err(io)?;
        }
        let out = ctl
            .request_feed(&ActuatorCommand::feed(1, CommandSource::Manual, now), now)
            .map_err(io)?;
        for (at, p) in out.records {
            log.append(at, p).map_err(io)?;
        }
    }
    log.close().map_err(io)?;
    let run = replay_run(dir.path(), "endurance").map_err(io)?;
    let e = metrics::endurance(&run.records);
    // count outcomes straight from the file text
    let mut text = String::new();
    for (_, path) in list_segments(dir.path(), "endurance").map_err(io)? {
        text.push_str(&fs::read_to_string(path).map_err(io)?);
    }
    let jams = text.matches("\"outcome\":\"jammed\"").count() as u64;
    let ok = text.matches("\"outcome\":\"dispensed\"").count() as u64;
    let attempts = jams + ok;
    let hand = (attempts - jams) as f64 / attempts as f64 * 100.0;
    check(
        attempts == 600 && e.feed_attempts == attempts && e.jams == jams && e.servo_success_pct == Some(hand),
        format!("{} attempts, {} jams, success {} vs hand {hand}%", e.feed_attempts, e.jams, pct(e.servo_success_pct)),
    )
}

fn accuracy_ordering(report: &MetricsReport) -> Outcome {
    let acc = |k| report.accuracy.get(&k).and_then(|a| a.accuracy_pct).unwrap_or(f64::NAN);
    let (temp, turb, ph, tds) = (
        acc(ParameterKind::WaterTemperature),
        acc(ParameterKind::Turbidity),
        acc(ParameterKind::Ph),
        acc(ParameterKind::Tds),
    );
    check(
        temp >= turb && turb >= ph && ph >= tds,
        format!("temperature {temp:.3} turbidity {turb:.3} pH {ph:.3} TDS {tds:.3}"),
    )
}

fn read_run_bytes(dir: &Path, run: &str) -> Result<Vec<Vec<u8>>, String> {
    list_segments(dir, run).map_err(io)?.into_iter().map(|(_, p)| fs::read(p).map_err(io)).collect()
}

fn determinism(first_dir: &Path) -> Outcome {
    let dir = tempfile::tempdir().map_err(io)?;
    run_simulation(SimulationConfig::new("std", dir.path())).map_err(io)?;
    let a = read_run_bytes(first_dir, "std")?;
    let b = read_run_bytes(dir.path(), "std")?;
    let ta = fs::read(first_dir.join("std.trace.ndjson")).map_err(io)?;
    let tb = fs::read(dir.path().join("std.trace.ndjson")).map_err(io)?;
    let bytes: usize = a.iter().map(Vec::len).sum();
    check(!a.is_empty() && a == b && ta == tb, format!("{} segments, {bytes} bytes identical", a.len()))
}

fn evaluator_fixtures() -> Outcome {
    let base = PlantConfig::default().equilibrium(true);
    let ph_trace = |points: &[(f64, f64)]| {
        GroundTruthTrace::new(
            points.iter().map(|&(s, ph)| TraceSample { timestamp: t(s), state: PlantState { ph, ..base } }).collect(),
            vec![],
        )
    };
    let snapshot = |seq: u64, at: f64, value: f64| EventRecord {
        sequence_number: seq,
        timestamp: t(at),
        payload: EventPayload::SensorSnapshot {
            cycle: seq,
            readings: vec![ParameterReading { kind: ParameterKind::Ph, value, timestamp: t(at), quality: Quality::Valid }],
        },
    };
    let alert = |seq: u64, at: f64| EventRecord {
        sequence_number: seq,
        timestamp: t(at),
        payload: EventPayload::Alert(AlertEvent::new(AlertKind::Parameter(ParameterKind::Ph), Direction::BelowLower, 6.5, t(at))),
    };

    // 10 readings against a pH ramp, one of them off by more than 0.3
    let ramp = ph_trace(&[(0.0, 7.0), (100.0, 8.0)]).map_err(io)?;
    let fixture: Vec<_> = (0..10)
        .map(|i| {
            let at = i as f64 * 10.0 + 5.0;
            let truth = 7.0 + at / 100.0;
            snapshot(i, at, if i == 6 { truth - 0.31 } else { truth + 0.29 })
        })
        .collect();
    let acc = accuracy(&ramp, &fixture, ParameterKind::Ph, 0.3).map_err(io)?;

    // 20 dips of pH below 6.8; 19 alerted, plus one spurious alert in a calm stretch
    let mut points = Vec::new();
    for e in 0..20 {
        let t0 = e as f64 * 1000.0;
        points.extend([(t0, 7.2), (t0 + 100.0, 7.2), (t0 + 110.0, 6.5), (t0 + 200.0, 6.5), (t0 + 210.0, 7.2)]);
    }
    let dips = ph_trace(&points).map_err(io)?;
    let mut log = Vec::new();
    let mut seq = 0;
    for e in 0..20 {
        let t0 = e as f64 * 1000.0;
        if e != 7 {
            log.push(alert(seq, t0 + 112.0 + e as f64));
            seq += 1;
        }
    }
    log.push(alert(seq, 7_500.0));
    let q = alert_quality(&dips, &log, &EvalConfig::default());

    // brute-force oracle: scan the trace at 1 ms for violation intervals
    let mut intervals: Vec<(i64, i64)> = Vec::new();
    let (lo_ms, hi_ms) = (t(0.0).as_millis(), t(19_210.0).as_millis());
    let mut open: Option<i64> = None;
    let mut last_bad = 0;
    for ms in lo_ms..=hi_ms {
        let v = dips.value_at(ParameterKind::Ph, Timestamp::from_millis(ms)).ok_or("gap in trace")?;
        if v < 6.8 {
            open.get_or_insert(ms);
            last_bad = ms;
        } else if let Some(s) = open.take() {
            intervals.push((s, last_bad));
        }
    }
    // an alert counts when it lands inside an interval or within one poll period after
    let hit = |ms: i64, iv: &(i64, i64)| ms >= iv.0 && ms <= iv.1 + 5_000;
    let alerts_ms: Vec<i64> = log.iter().map(|r| r.timestamp.as_millis()).collect();
    let tp = alerts_ms.iter().filter(|&&a| intervals.iter().any(|iv| hit(a, iv))).count();
    let detected = intervals.iter().filter(|iv| alerts_ms.iter().any(|&a| hit(a, iv))).count();
    let oracle_p = tp as f64 * 100.0 / alerts_ms.len() as f64;
    let oracle_r = detected as f64 * 100.0 / intervals.len() as f64;

    check(
        acc == 90.0
            && intervals.len() == 20
            && q.precision_pct == Some(95.0)
            && q.recall_pct == Some(95.0)
            && q.precision_pct == Some(oracle_p)
            && q.recall_pct == Some(oracle_r),
        format!(
            "accuracy {acc}%, precision {} (oracle {oracle_p}%), recall {} (oracle {oracle_r}%) over {} episodes",
            pct(q.precision_pct),
            pct(q.recall_pct),
            q.episodes
        ),
    )
}

fn main() {
    let started = Instant::now();
    let std_dir = tempfile::tempdir().expect("temp dir");
    let standard = run_and_evaluate(SimulationConfig::new("std", std_dir.path()));
    let with_report = |f: &dyn Fn(&MetricsReport) -> Outcome| match &standard {
        Ok((r, _)) => f(r),
        Err(e) => Err(format!("standard run failed: {e}")),
    };

    let results: Vec<(&str, Outcome)> = vec![
        ("cooldown exactness", cooldown_exactness()),
        ("smoothing oracle", smoothing_oracle()),
        ("calibration round-trip", calibration_round_trip()),
        ("threshold truth table", threshold_truth_table()),
        ("alert quality on standard scenario", with_report(&alert_quality_standard)),
        ("detection latency", with_report(&|r| detection_latency(r, std_dir.path()))),
        ("recovery", recovery()),
        ("endurance accounting", endurance_accounting()),
        ("sensor accuracy ordering", with_report(&accuracy_ordering)),
        ("end-to-end determinism", determinism(std_dir.path())),
        ("evaluator oracle", evaluator_fixtures()),
    ];

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
