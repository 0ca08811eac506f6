//! Accuracy tables by ACR category and classifier.

use std::fmt::Write;

use mammoseg_core::classify::{AcrLabel, Evaluation, CLASSES};

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub knn: Option<Evaluation>,
    pub mlp: Option<Evaluation>,
    pub notes: Vec<String>,
    pub train_count: usize,
    pub test_count: usize,
    /// Resolved configuration, sorted by key.
    pub config: Vec<(&'static str, String)>,
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |a| format!("{:.2}%", 100.0 * a))
}

fn fraction(v: Option<f64>) -> String {
    v.map_or_else(String::new, |a| format!("{a:.6}"))
}

impl AccuracyReport {
    fn columns(&self) -> [(&'static str, Option<&Evaluation>); 2] {
        [("KNN", self.knn.as_ref()), ("MLP", self.mlp.as_ref())]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Classification accuracy on the test split");
        let _ = writeln!(s, "train samples: {}  test samples: {}", self.train_count, self.test_count);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10}{:>10}{:>10}", "category", "KNN", "MLP");
        for label in AcrLabel::ALL {
            let cell = |e: Option<&Evaluation>| percent(e.and_then(|e| e.per_class[label.index()]));
            let _ = writeln!(s, "{:<10}{:>10}{:>10}", label.to_string(), cell(self.knn.as_ref()), cell(self.mlp.as_ref()));
        }
        let overall = |e: Option<&Evaluation>| percent(e.map(|e| e.overall));
        let _ = writeln!(s, "{:<10}{:>10}{:>10}", "overall", overall(self.knn.as_ref()), overall(self.mlp.as_ref()));
        for (name, eval) in self.columns() {
            let Some(e) = eval else { continue };
            let _ = writeln!(s);
            let _ = writeln!(s, "{name} confusion matrix (rows: truth, columns: predicted)");
            let _ = write!(s, "{:<8}", "");
            for l in AcrLabel::ALL {
                let _ = write!(s, "{:>7}", l.to_string());
            }
            let _ = writeln!(s);
            for (t, row) in e.confusion.iter().enumerate() {
                let _ = write!(s, "{:<8}", AcrLabel::ALL[t].to_string());
                for c in row {
                    let _ = write!(s, "{c:>7}");
                }
                let _ = writeln!(s);
            }
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s);
            for n in &self.notes {
                let _ = writeln!(s, "note: {n}");
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "configuration");
        for (k, v) in &self.config {
            let _ = writeln!(s, "  {k} = {v}");
        }
        s
    }

    /// `category,knn,mlp` accuracies as fractions, preceded by `#` config lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.config {
            let _ = writeln!(s, "# {k} = {v}");
        }
        let _ = writeln!(s, "category,knn,mlp");
        for label in AcrLabel::ALL {
            let cell = |e: Option<&Evaluation>| fraction(e.and_then(|e| e.per_class[label.index()]));
            let _ = writeln!(s, "{label},{},{}", cell(self.knn.as_ref()), cell(self.mlp.as_ref()));
        }
        let overall = |e: Option<&Evaluation>| fraction(e.map(|e| e.overall));
        let _ = writeln!(s, "overall,{},{}", overall(self.knn.as_ref()), overall(self.mlp.as_ref()));
        s
    }

    /// `classifier,truth,ACR1..ACR5` counts.
    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("classifier,truth");
        for l in AcrLabel::ALL {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for (name, eval) in self.columns() {
            let Some(e) = eval else { continue };
            for t in 0..CLASSES {
                let _ = write!(s, "{},{}", name.to_lowercase(), AcrLabel::ALL[t]);
                for c in e.confusion[t] {
                    let _ = write!(s, ",{c}");
                }
                s.push('\n');
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mammoseg_core::classify::evaluate;

    #[test]
    fn perfect_predictions_fill_every_cell() {
        let pairs: Vec<_> = AcrLabel::ALL.iter().map(|&l| (l, l)).collect();
        let e = evaluate(&pairs).unwrap();
        let r = AccuracyReport {
            knn: Some(e.clone()),
            mlp: Some(e),
            notes: vec![],
            train_count: 5,
            test_count: 5,
            config: vec![("seed", "1".into())],
        };
        let text = r.to_text();
        assert_eq!(text.matches("100.00%").count(), 12);
        assert!(text.contains("seed = 1"));
        let csv = r.to_csv();
        assert!(csv.contains("ACR3,1.000000,1.000000"));
        assert!(csv.starts_with("# seed = 1\n"));
        assert_eq!(r.confusion_csv().lines().count(), 11);
    }

    #[test]
    fn missing_classifier_shows_dash() {
        let e = evaluate(&[(AcrLabel::Acr1, AcrLabel::Acr1)]).unwrap();
        let r = AccuracyReport { knn: Some(e), mlp: None, notes: vec!["mlp skipped".into()], train_count: 1, test_count: 1, config: vec![] };
        let text = r.to_text();
        assert!(text.contains("ACR2"));
        assert!(text.contains("note: mlp skipped"));
        assert!(r.to_csv().contains("overall,1.000000,\n"));
    }
}
