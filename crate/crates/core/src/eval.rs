//! Dataset partitioning, closed-set accuracy and verification ROC/EER.
//!
//! A verification score is the classifier's softmax probability for the
//! claimed signer. Genuine trials claim each test sample's own signer,
//! random-forgery trials claim every other signer, and skilled-forgery
//! trials claim a forgery's target.

use crate::nn::NnError;
use crate::slitcnn::{Example, TrainedModel};
use crate::trajectory::InterpolatedTrajectory;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] NnError),
}

fn arg<T>(msg: impl Into<String>) -> Result<T, EvalError> {
    Err(EvalError::Argument(msg.into()))
}

pub const TRAIN_PER_SIGNER: usize = 16;
pub const VALIDATION_PER_SIGNER: usize = 4;
pub const TEST_PER_SIGNER: usize = 5;

/// Train/validation/test sizes for `n` genuine samples: 16/4/5 at 25,
/// proportional below, surplus to test above. Every part gets at least one
/// sample.
pub fn split_counts(n: usize) -> Result<(usize, usize, usize), EvalError> {
    if n < 3 {
        return arg(format!("need at least 3 genuine samples per signer, got {n}"));
    }
    let full = TRAIN_PER_SIGNER + VALIDATION_PER_SIGNER + TEST_PER_SIGNER;
    if n >= full {
        return Ok((TRAIN_PER_SIGNER, VALIDATION_PER_SIGNER, n - 20));
    }
    let share = |k: usize| ((n * k) as f64 / full as f64).round().max(1.0) as usize;
    let val = share(VALIDATION_PER_SIGNER);
    let test = share(TEST_PER_SIGNER);
    let train = n.saturating_sub(val + test);
    if train == 0 {
        return Ok((1, 1, n - 2));
    }
    Ok((train, val, test))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignerSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Forgeries targeting this signer, reserved for verification.
    pub forgeries: Vec<usize>,
}

/// Per-signer sample-id partition; the signer index is the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub signers: Vec<SignerSplit>,
}

impl DatasetSplit {
    /// Shuffles each signer's genuine ids with a seeded RNG and cuts them by
    /// [`split_counts`].
    pub fn new(genuine_counts: &[usize], forgery_counts: &[usize], seed: u64) -> Result<Self, EvalError> {
        if genuine_counts.len() != forgery_counts.len() {
            return arg("genuine and forgery count lists differ in length");
        }
        if genuine_counts.is_empty() {
            return arg("no signers");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signers = genuine_counts
            .iter()
            .zip(forgery_counts)
            .map(|(&n, &f)| {
                let (a, b, _) = split_counts(n)?;
                let mut ids: Vec<usize> = (0..n).collect();
                ids.shuffle(&mut rng);
                let sorted = |s: &[usize]| {
                    let mut v = s.to_vec();
                    v.sort_unstable();
                    v
                };
                Ok(SignerSplit {
                    train: sorted(&ids[..a]),
                    validation: sorted(&ids[a..a + b]),
                    test: sorted(&ids[a + b..]),
                    forgeries: (0..f).collect(),
                })
            })
            .collect::<Result<_, EvalError>>()?;
        Ok(Self { signers })
    }

    /// One `signer_id,sample_id,role` line per sample with a header.
    pub fn to_text(&self) -> String {
        let mut s = String::from("signer_id,sample_id,role\n");
        for (k, sp) in self.signers.iter().enumerate() {
            for (role, ids) in [
                ("train", &sp.train),
                ("validation", &sp.validation),
                ("test", &sp.test),
                ("forgery", &sp.forgeries),
            ] {
                for id in ids {
                    let _ = writeln!(s, "{k},{id},{role}");
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "signer_id,sample_id,role")) => {}
            _ => {
                return Err(EvalError::Parse {
                    line: 1,
                    message: "missing header".into(),
                })
            }
        }
        let mut signers: Vec<SignerSplit> = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let bad = |m: String| EvalError::Parse {
                line: i + 1,
                message: m,
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad(format!("expected 3 fields, got {}", f.len())));
            }
            let k: usize = f[0]
                .parse()
                .map_err(|_| bad(format!("bad signer id {:?}", f[0])))?;
            let id: usize = f[1]
                .parse()
                .map_err(|_| bad(format!("bad sample id {:?}", f[1])))?;
            if k >= signers.len() {
                signers.resize(
                    k + 1,
                    SignerSplit {
                        train: vec![],
                        validation: vec![],
                        test: vec![],
                        forgeries: vec![],
                    },
                );
            }
            let sp = &mut signers[k];
            match f[2] {
                "train" => sp.train.push(id),
                "validation" => sp.validation.push(id),
                "test" => sp.test.push(id),
                "forgery" => sp.forgeries.push(id),
                other => return Err(bad(format!("unknown role {other:?}"))),
            }
        }
        Ok(Self { signers })
    }
}

/// Fraction of samples whose most probable class equals the label.
pub fn recognition_accuracy(model: &TrainedModel, test: &[Example]) -> Result<f64, EvalError> {
    if test.is_empty() {
        return arg("empty test set");
    }
    let inputs: Vec<&InterpolatedTrajectory> = test.iter().map(|e| &e.input).collect();
    let predicted = model.predict(&inputs)?;
    let hits = predicted.iter().zip(test).filter(|(p, e)| **p == e.label).count();
    Ok(hits as f64 / test.len() as f64)
}

/// A sample's class probabilities and its true (or, for forgeries,
/// targeted) signer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub label: usize,
    pub probs: Vec<f64>,
}

pub fn score_samples(model: &TrainedModel, samples: &[Example]) -> Result<Vec<ScoredSample>, EvalError> {
    let inputs: Vec<&InterpolatedTrajectory> = samples.iter().map(|e| &e.input).collect();
    let probs = model.predict_proba(&inputs)?;
    Ok(samples
        .iter()
        .zip(probs)
        .map(|(e, probs)| ScoredSample {
            label: e.label,
            probs,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialMode {
    Random,
    Skilled,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trials {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

/// Genuine scores from `test`; impostor scores from the other classes of
/// `test` (random) or from `forgeries` claimed as their target (skilled).
pub fn verification_trials(
    test: &[ScoredSample],
    forgeries: &[ScoredSample],
    mode: TrialMode,
) -> Result<Trials, EvalError> {
    if test.is_empty() {
        return arg("no test samples");
    }
    let check = |s: &ScoredSample| {
        if s.label >= s.probs.len() {
            arg(format!("label {} outside {} classes", s.label, s.probs.len()))
        } else {
            Ok(())
        }
    };
    for s in test.iter().chain(forgeries) {
        check(s)?;
    }
    let genuine = test.iter().map(|s| s.probs[s.label]).collect();
    let impostor = match mode {
        TrialMode::Random => test
            .iter()
            .flat_map(|s| {
                s.probs
                    .iter()
                    .enumerate()
                    .filter(move |(c, _)| *c != s.label)
                    .map(|(_, p)| *p)
            })
            .collect(),
        TrialMode::Skilled => {
            if forgeries.is_empty() {
                return arg("skilled trials need forgery samples");
            }
            forgeries.iter().map(|s| s.probs[s.label]).collect()
        }
    };
    Ok(Trials { genuine, impostor })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    /// One point per distinct score plus a final `+∞` threshold, ascending.
    pub points: Vec<RocPoint>,
    pub eer: f64,
}

fn check_scores(genuine: &[f64], impostor: &[f64]) -> Result<(), EvalError> {
    if genuine.is_empty() || impostor.is_empty() {
        return arg("both genuine and impostor scores are required");
    }
    if genuine.iter().chain(impostor).any(|s| s.is_nan()) {
        return arg("scores contain NaN");
    }
    Ok(())
}

/// EER where `FAR − FRR` first becomes non-positive: the exact value on a
/// tie, otherwise linear interpolation from the previous threshold.
fn crossing(points: &[RocPoint]) -> f64 {
    let diff = |p: &RocPoint| p.far - p.frr;
    let k = points
        .iter()
        .position(|p| diff(p) <= 0.0)
        .expect("the +inf threshold has FAR 0 and FRR 1");
    let cur = &points[k];
    if diff(cur) == 0.0 || k == 0 {
        return cur.far;
    }
    let prev = &points[k - 1];
    let s = diff(prev) / (diff(prev) - diff(cur));
    prev.far + s * (cur.far - prev.far)
}

/// Sweeps every distinct score as a threshold with FAR = share of impostor
/// scores `≥ θ` and FRR = share of genuine scores `< θ`.
pub fn roc_eer(genuine: &[f64], impostor: &[f64]) -> Result<Roc, EvalError> {
    check_scores(genuine, impostor)?;
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = g.iter().chain(&im).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let (ng, ni) = (g.len() as f64, im.len() as f64);
    let (mut below_g, mut below_i) = (0usize, 0usize);
    let points: Vec<RocPoint> = thresholds
        .into_iter()
        .map(|th| {
            while below_g < g.len() && g[below_g] < th {
                below_g += 1;
            }
            while below_i < im.len() && im[below_i] < th {
                below_i += 1;
            }
            RocPoint {
                threshold: th,
                far: (im.len() - below_i) as f64 / ni,
                frr: below_g as f64 / ng,
            }
        })
        .collect();
    let eer = crossing(&points);
    Ok(Roc { points, eer })
}

/// Quadratic reference sweep: counts FAR/FRR from scratch at every
/// threshold.
pub fn brute_force_eer(genuine: &[f64], impostor: &[f64]) -> Result<f64, EvalError> {
    check_scores(genuine, impostor)?;
    let mut thresholds: Vec<f64> = Vec::new();
    for &s in genuine.iter().chain(impostor) {
        if !thresholds.contains(&s) {
            thresholds.push(s);
        }
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.push(f64::INFINITY);
    let points: Vec<RocPoint> = thresholds
        .iter()
        .map(|&th| RocPoint {
            threshold: th,
            far: impostor.iter().filter(|&&s| s >= th).count() as f64 / impostor.len() as f64,
            frr: genuine.iter().filter(|&&s| s < th).count() as f64 / genuine.len() as f64,
        })
        .collect();
    Ok(crossing(&points))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub variant: String,
    pub recognition_accuracy: f64,
    pub test_samples: usize,
    pub genuine_trials: usize,
    pub random_impostor_trials: usize,
    pub skilled_impostor_trials: usize,
    pub roc_random: Roc,
    pub roc_skilled: Option<Roc>,
}

impl VerificationReport {
    /// Scores `test` and `forgeries` (labelled with their target) and
    /// collects accuracy and both ROC curves.
    pub fn evaluate(
        model: &TrainedModel,
        test: &[Example],
        forgeries: &[Example],
    ) -> Result<Self, EvalError> {
        let scored = score_samples(model, test)?;
        let hits = scored.iter().filter(|s| argmax(&s.probs) == s.label).count();
        let random = verification_trials(&scored, &[], TrialMode::Random)?;
        let roc_random = roc_eer(&random.genuine, &random.impostor)?;
        let (roc_skilled, skilled_n) = if forgeries.is_empty() {
            (None, 0)
        } else {
            let forged = score_samples(model, forgeries)?;
            let skilled = verification_trials(&scored, &forged, TrialMode::Skilled)?;
            (
                Some(roc_eer(&skilled.genuine, &skilled.impostor)?),
                skilled.impostor.len(),
            )
        };
        Ok(Self {
            variant: model.spec().variant.tag().into(),
            recognition_accuracy: hits as f64 / test.len() as f64,
            test_samples: test.len(),
            genuine_trials: random.genuine.len(),
            random_impostor_trials: random.impostor.len(),
            skilled_impostor_trials: skilled_n,
            roc_random,
            roc_skilled,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variant={}", self.variant);
        let _ = writeln!(s, "recognition_accuracy={}", self.recognition_accuracy);
        let _ = writeln!(s, "test_samples={}", self.test_samples);
        let _ = writeln!(s, "genuine_trials={}", self.genuine_trials);
        let _ = writeln!(s, "random_impostor_trials={}", self.random_impostor_trials);
        let _ = writeln!(s, "skilled_impostor_trials={}", self.skilled_impostor_trials);
        let _ = writeln!(s, "eer_random={}", self.roc_random.eer);
        if let Some(r) = &self.roc_skilled {
            let _ = writeln!(s, "eer_skilled={}", r.eer);
        }
        let mut table = |name: &str, roc: &Roc| {
            let _ = writeln!(s, "\n[{name}]\nthreshold,far,frr");
            for p in &roc.points {
                let _ = writeln!(s, "{},{},{}", p.threshold, p.far, p.frr);
            }
        };
        table("roc_random", &self.roc_random);
        if let Some(r) = &self.roc_skilled {
            table("roc_skilled", r);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, EvalError> {
        let mut kv = std::collections::HashMap::new();
        let mut tables: Vec<(String, Vec<RocPoint>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let bad = |m: String| EvalError::Parse {
                line: i + 1,
                message: m,
            };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == "threshold,far,frr" {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                tables.push((name.to_string(), Vec::new()));
            } else if let Some((table_name, rows)) = tables.last_mut() {
                let f: Vec<&str> = line.split(',').collect();
                let nums: Result<Vec<f64>, _> = f.iter().map(|v| v.parse::<f64>()).collect();
                match nums {
                    Ok(n) if n.len() == 3 => rows.push(RocPoint {
                        threshold: n[0],
                        far: n[1],
                        frr: n[2],
                    }),
                    _ => return Err(bad(format!("bad row in [{table_name}]: {line:?}"))),
                }
            } else {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
                kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
            }
        }
        let get = |k: &str| {
            kv.get(k).cloned().ok_or(EvalError::Parse {
                line: 0,
                message: format!("missing key {k}"),
            })
        };
        fn num<T: std::str::FromStr>((line, v): (usize, String)) -> Result<T, EvalError> {
            v.parse().map_err(|_| EvalError::Parse {
                line,
                message: format!("bad number {v:?}"),
            })
        }
        let roc = |name: &str, eer: Option<f64>| -> Option<Roc> {
            tables.iter().find(|(n, _)| n == name).map(|(_, pts)| Roc {
                points: pts.clone(),
                eer: eer.unwrap_or_else(|| crossing_or_nan(pts)),
            })
        };
        let eer_random: f64 = num(get("eer_random")?)?;
        let eer_skilled: Option<f64> = kv.get("eer_skilled").cloned().map(num).transpose()?;
        Ok(Self {
            variant: get("variant")?.1,
            recognition_accuracy: num(get("recognition_accuracy")?)?,
            test_samples: num(get("test_samples")?)?,
            genuine_trials: num(get("genuine_trials")?)?,
            random_impostor_trials: num(get("random_impostor_trials")?)?,
            skilled_impostor_trials: num(get("skilled_impostor_trials")?)?,
            roc_random: roc("roc_random", Some(eer_random)).ok_or(EvalError::Parse {
                line: 0,
                message: "missing [roc_random] table".into(),
            })?,
            roc_skilled: roc("roc_skilled", eer_skilled),
        })
    }

    /// FAR (x) against FRR (y) for each trial type, with the EER diagonal.
    pub fn to_svg(&self) -> String {
        const SIZE: f64 = 400.0;
        const PAD: f64 = 50.0;
        let map = |far: f64, frr: f64| (PAD + far * SIZE, PAD + (1.0 - frr) * SIZE);
        let mut s = String::new();
        let total = SIZE + 2.0 * PAD;
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
        );
        let (x0, y0) = map(0.0, 0.0);
        let (x1, y1) = map(1.0, 1.0);
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#999" stroke-dasharray="4 4"/>"##
        );
        for k in 0..=4 {
            let v = k as f64 / 4.0;
            let (x, _) = map(v, 0.0);
            let (_, y) = map(0.0, v);
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" text-anchor="middle">{v}</text>"#,
                PAD + SIZE + 16.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#,
                PAD - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">false accept rate</text>"#,
            PAD + SIZE / 2.0,
            total - 10.0
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">false reject rate</text>"#,
            PAD + SIZE / 2.0,
            PAD + SIZE / 2.0
        );
        let mut curve = |roc: &Roc, color: &str, label: &str, row: f64| {
            let pts: Vec<String> = roc
                .points
                .iter()
                .map(|p| {
                    let (x, y) = map(p.far, p.frr);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
            let (ex, ey) = map(roc.eer, roc.eer);
            let _ = writeln!(s, r#"<circle cx="{ex:.2}" cy="{ey:.2}" r="4" fill="{color}"/>"#);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">{label} EER {:.2}%</text>"#,
                PAD + SIZE - 170.0,
                PAD + 20.0 + 16.0 * row,
                100.0 * roc.eer
            );
        };
        curve(&self.roc_random, "#1f77b4", "random", 0.0);
        if let Some(r) = &self.roc_skilled {
            curve(r, "#d62728", "skilled", 1.0);
        }
        s.push_str("</svg>\n");
        s
    }
}

fn crossing_or_nan(points: &[RocPoint]) -> f64 {
    if points.iter().any(|p| p.far - p.frr <= 0.0) {
        crossing(points)
    } else {
        f64::NAN
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}
