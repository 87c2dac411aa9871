//! Frame-level scoring: Jaccard index, frame accuracy, confusion matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::skeleton::{runs, FrameLabels};
use crate::N_CLASSES;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape {
            what: "label vector length",
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// (|a ∧ b|, |a ∨ b|).
pub fn jaccard_counts(a: &[bool], b: &[bool]) -> Result<(usize, usize)> {
    check_len(a.len(), b.len())?;
    Ok(a.iter().zip(b).fold((0, 0), |(i, u), (&x, &y)| (i + usize::from(x && y), u + usize::from(x || y))))
}

/// Intersection over union of two masks; 0 when both are empty.
pub fn jaccard_binary(a: &[bool], b: &[bool]) -> Result<f64> {
    let (i, u) = jaccard_counts(a, b)?;
    Ok(if u == 0 { 0.0 } else { i as f64 / u as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairScore {
    pub sequence_id: String,
    pub class_id: u8,
    pub intersection: usize,
    pub union: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JaccardReport {
    pub pairs: Vec<PairScore>,
    /// Unweighted mean over all (sequence, class) pairs; `None` when there
    /// are no pairs.
    pub overall: Option<f64>,
    pub per_class: BTreeMap<u8, f64>,
}

/// One evaluated sequence.
#[derive(Debug, Clone, Copy)]
pub struct LabelPair<'a> {
    pub sequence_id: &'a str,
    pub truth: &'a FrameLabels,
    pub predicted: &'a FrameLabels,
}

/// Mean Jaccard over every (sequence, class) pair where the class occurs in
/// the ground truth or the prediction of that sequence. All instances of a
/// class in a sequence form one mask.
pub fn mean_jaccard(sequences: &[LabelPair]) -> Result<JaccardReport> {
    let mut pairs = Vec::new();
    for s in sequences {
        check_len(s.truth.len(), s.predicted.len())?;
        let mut present = [false; 256];
        for &c in s.truth.as_slice().iter().chain(s.predicted.as_slice()) {
            present[usize::from(c)] = true;
        }
        for c in (1..=255u8).filter(|&c| present[usize::from(c)]) {
            let gt: Vec<bool> = s.truth.as_slice().iter().map(|&x| x == c).collect();
            let pr: Vec<bool> = s.predicted.as_slice().iter().map(|&x| x == c).collect();
            let (intersection, union) = jaccard_counts(&gt, &pr)?;
            pairs.push(PairScore {
                sequence_id: s.sequence_id.to_string(),
                class_id: c,
                intersection,
                union,
                score: intersection as f64 / union as f64,
            });
        }
    }
    let overall = (!pairs.is_empty()).then(|| pairs.iter().map(|p| p.score).sum::<f64>() / pairs.len() as f64);
    let mut sums: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    for p in &pairs {
        let e = sums.entry(p.class_id).or_default();
        e.0 += p.score;
        e.1 += 1;
    }
    let per_class = sums.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect();
    Ok(JaccardReport { pairs, overall, per_class })
}

/// Fraction of frames where the two activity masks agree.
pub fn frame_accuracy(truth: &[bool], predicted: &[bool]) -> Result<f64> {
    check_len(truth.len(), predicted.len())?;
    if truth.is_empty() {
        return Err(Error::invalid("frame accuracy of an empty sequence"));
    }
    let same = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(same as f64 / truth.len() as f64)
}

/// Frame counts, rows = ground truth, columns = prediction, class 0 = rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        ConfusionMatrix {
            counts: [[0; N_CLASSES]; N_CLASSES],
        }
    }
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: &FrameLabels, predicted: &FrameLabels) -> Result<()> {
        check_len(truth.len(), predicted.len())?;
        for (&t, &p) in truth.as_slice().iter().zip(predicted.as_slice()) {
            self.counts[usize::from(t)][usize::from(p)] += 1;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> [u64; N_CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn transposed(&self) -> Self {
        let mut t = Self::default();
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                t.counts[j][i] = v;
            }
        }
        t
    }

    /// Gesture frames predicted as rest, per ground-truth class.
    pub fn false_negatives(&self) -> [u64; N_CLASSES] {
        let mut out = self.counts.map(|r| r[0]);
        out[0] = 0;
        out
    }

    /// Rest frames predicted as a gesture, per predicted class.
    pub fn false_positives(&self) -> [u64; N_CLASSES] {
        let mut out = self.counts[0];
        out[0] = 0;
        out
    }

    /// Whitespace-separated integer grid, one row per line.
    pub fn to_grid(&self) -> String {
        grid(&self.counts, |v| v.to_string())
    }

    /// log10(count + 1) grid for plotting.
    pub fn to_log_grid(&self) -> String {
        grid(&self.counts, |v| format!("{:.6}", ((v + 1) as f64).log10()))
    }
}

fn grid(counts: &[[u64; N_CLASSES]; N_CLASSES], cell: impl Fn(u64) -> String) -> String {
    let mut s = String::new();
    for row in counts {
        let cells: Vec<String> = row.iter().map(|&v| cell(v)).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

/// Everything `evaluate` reports for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub jaccard: JaccardReport,
    pub confusion: ConfusionMatrix,
    pub frame_accuracy: f64,
    pub frames: usize,
}

pub fn evaluate(sequences: &[LabelPair]) -> Result<Evaluation> {
    let jaccard = mean_jaccard(sequences)?;
    let mut confusion = ConfusionMatrix::default();
    let mut truth = Vec::new();
    let mut predicted = Vec::new();
    for s in sequences {
        confusion.add(s.truth, s.predicted)?;
        truth.extend(s.truth.activity());
        predicted.extend(s.predicted.activity());
    }
    Ok(Evaluation {
        jaccard,
        confusion,
        frame_accuracy: frame_accuracy(&truth, &predicted)?,
        frames: truth.len(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

impl Evaluation {
    /// `key = value` lines for scripts.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mean_jaccard = {}", fmt_opt(self.jaccard.overall));
        let _ = writeln!(s, "jaccard_defined = {}", self.jaccard.overall.is_some());
        let _ = writeln!(s, "pairs = {}", self.jaccard.pairs.len());
        let _ = writeln!(s, "frame_accuracy = {:.6}", self.frame_accuracy);
        let _ = writeln!(s, "frames = {}", self.frames);
        for (c, v) in &self.jaccard.per_class {
            let _ = writeln!(s, "class_{c}_jaccard = {v:.6}");
        }
        for p in &self.jaccard.pairs {
            let _ = writeln!(s, "pair {} {} = {:.6}", p.sequence_id, p.class_id, p.score);
        }
        s
    }

    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mean Jaccard    {}", fmt_opt(self.jaccard.overall));
        let _ = writeln!(s, "frame accuracy  {:.4}", self.frame_accuracy);
        let _ = writeln!(s, "frames          {}", self.frames);
        let _ = writeln!(s, "pairs           {}", self.jaccard.pairs.len());
        let _ = writeln!(s);
        let _ = writeln!(s, "class  jaccard   false-neg  false-pos");
        let fne = self.confusion.false_negatives();
        let fpo = self.confusion.false_positives();
        for (c, v) in &self.jaccard.per_class {
            let c = usize::from(*c);
            let _ = writeln!(s, "{c:>5}  {v:.4}    {:>9}  {:>9}", fne[c], fpo[c]);
        }
        s
    }
}

/// Ground truth and prediction as label runs, one `start end class` per line.
pub fn timeline(sequence_id: &str, truth: &FrameLabels, predicted: &FrameLabels) -> String {
    let mut s = format!("sequence {sequence_id}\n");
    for (name, labels) in [("truth", truth), ("predicted", predicted)] {
        let _ = writeln!(s, "{name}");
        for (c, a, b) in runs(labels.as_slice()) {
            let _ = writeln!(s, "{a} {b} {c}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(len: usize, on: std::ops::RangeInclusive<usize>) -> Vec<bool> {
        (0..len).map(|i| on.contains(&i)).collect()
    }

    fn labels(v: &[u8]) -> FrameLabels {
        FrameLabels::new(v.to_vec()).unwrap()
    }

    #[test]
    fn binary_examples() {
        let a = mask(30, 10..=20);
        assert_eq!(jaccard_binary(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard_binary(&a, &mask(30, 21..=25)).unwrap(), 0.0);
        assert_eq!(jaccard_binary(&a, &mask(30, 15..=25)).unwrap(), 0.375);
        assert_eq!(jaccard_binary(&[false; 4], &[false; 4]).unwrap(), 0.0);
        assert!(jaccard_binary(&[true], &[true, false]).is_err());
    }

    #[test]
    fn mean_over_union_of_classes() {
        // seq a: class 1 perfect (1.0); seq b: class 2 half (0.5), false class 3 (0.0)
        let ta = labels(&[0, 1, 1, 0]);
        let tb = labels(&[2, 2, 0, 0]);
        let pb = labels(&[2, 0, 3, 0]);
        let r = mean_jaccard(&[
            LabelPair { sequence_id: "a", truth: &ta, predicted: &ta },
            LabelPair { sequence_id: "b", truth: &tb, predicted: &pb },
        ])
        .unwrap();
        let scores: Vec<f64> = r.pairs.iter().map(|p| p.score).collect();
        assert_eq!(scores, vec![1.0, 0.5, 0.0]);
        assert_eq!(r.overall, Some(0.5));
        let rest = labels(&[0, 0]);
        let r = mean_jaccard(&[LabelPair { sequence_id: "r", truth: &rest, predicted: &rest }]).unwrap();
        assert_eq!(r.overall, None);
        let all_rest = labels(&[0, 0, 0, 0]);
        let r = mean_jaccard(&[LabelPair { sequence_id: "a", truth: &ta, predicted: &all_rest }]).unwrap();
        assert_eq!(r.overall, Some(0.0));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(frame_accuracy(&[true, false], &[true, false]).unwrap(), 1.0);
        assert_eq!(frame_accuracy(&[true, false], &[false, true]).unwrap(), 0.0);
        let t = vec![true; 100];
        let mut p = t.clone();
        p[..3].fill(false);
        assert_eq!(frame_accuracy(&t, &p).unwrap(), 0.97);
        assert!(frame_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn confusion_margins() {
        let t = labels(&[0, 0, 1, 1, 2, 2]);
        let p = labels(&[0, 3, 1, 0, 2, 2]);
        let mut m = ConfusionMatrix::default();
        m.add(&t, &p).unwrap();
        assert_eq!(m.total(), 6);
        assert_eq!(m.false_negatives()[1], 1);
        assert_eq!(m.false_positives()[3], 1);
        let mut back = ConfusionMatrix::default();
        back.add(&p, &t).unwrap();
        assert_eq!(back, m.transposed());
        assert_eq!(m.to_grid().lines().count(), 21);
        assert!(m.to_log_grid().starts_with("0.301030 0.000000 0.000000 0.301030 0.000000"));
    }

    #[test]
    fn timeline_lists_runs() {
        let t = labels(&[0, 4, 4]);
        let s = timeline("x", &t, &t);
        assert_eq!(s, "sequence x\ntruth\n0 0 0\n1 2 4\npredicted\n0 0 0\n1 2 4\n");
    }

    proptest! {
        #[test]
        fn jaccard_symmetric_and_bounded(a in prop::collection::vec(any::<bool>(), 0..60), seed in any::<u64>()) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let b: Vec<bool> = a.iter().map(|_| rng.next_f64() < 0.5).collect();
            let x = jaccard_binary(&a, &b).unwrap();
            prop_assert_eq!(x, jaccard_binary(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(x == 1.0, a == b && a.iter().any(|v| *v));
        }

        #[test]
        fn confusion_rows_are_class_counts(t in prop::collection::vec(0u8..21, 0..80), seed in any::<u64>()) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let p: Vec<u8> = t.iter().map(|_| rng.below(21) as u8).collect();
            let mut m = ConfusionMatrix::default();
            m.add(&labels(&t), &labels(&p)).unwrap();
            let rows = m.row_sums();
            for c in 0..21u8 {
                prop_assert_eq!(rows[usize::from(c)], t.iter().filter(|&&x| x == c).count() as u64);
            }
        }

        #[test]
        fn mean_is_order_invariant(n in 1usize..5, seed in any::<u64>()) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let data: Vec<(String, FrameLabels, FrameLabels)> = (0..n)
                .map(|i| {
                    let t: Vec<u8> = (0..30).map(|_| rng.below(3) as u8).collect();
                    let p: Vec<u8> = (0..30).map(|_| rng.below(3) as u8).collect();
                    (format!("s{i}"), labels(&t), labels(&p))
                })
                .collect();
            let fwd: Vec<LabelPair> = data.iter().map(|(s, t, p)| LabelPair { sequence_id: s, truth: t, predicted: p }).collect();
            let mut rev = fwd.clone();
            rev.reverse();
            let a = mean_jaccard(&fwd).unwrap().overall.unwrap();
            let b = mean_jaccard(&rev).unwrap().overall.unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
