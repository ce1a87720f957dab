use std::fmt::Write as _;

use super::experiment::EvalReport;

/// One line per fold.
pub fn folds_csv(report: &EvalReport) -> String {
    let mut out = String::from("classifier,scheme,fold,repeat,group,n_test,accuracy\n");
    for f in &report.folds {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6}",
            report.classifier,
            report.cv.label(),
            f.fold,
            f.repeat,
            f.group.as_deref().unwrap_or(""),
            f.per_class_total.iter().sum::<u64>(),
            f.accuracy
        );
    }
    out
}

pub fn per_class_csv(report: &EvalReport) -> String {
    let mut out = String::from("classifier,scheme,class,mean,std,folds\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for c in &report.per_class {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            report.classifier,
            report.cv.label(),
            c.class,
            opt(c.mean),
            opt(c.std),
            c.folds
        );
    }
    out
}

/// Aggregated counts, truth by row and prediction by column.
pub fn confusion_csv(report: &EvalReport) -> String {
    let mut out = String::from("truth");
    for c in &report.classes {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (name, row) in report.classes.iter().zip(report.confusion.rows()) {
        out.push_str(name);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Reports of one classifier under stratified k-fold and grouped CV.
#[derive(Debug, Clone, Copy, Default)]
pub struct ResultsRow<'a> {
    pub cv: Option<&'a EvalReport>,
    pub gcv: Option<&'a EvalReport>,
}

fn pct(mean: f64, std: f64) -> String {
    format!("{:.1} ± {:.1}", 100.0 * mean, 100.0 * std)
}

/// Plain-text table: classifier, k-fold accuracy, grouped accuracy, then the
/// per-class k-fold accuracy (grouped when no k-fold report exists).
pub fn results_table(rows: &[ResultsRow]) -> String {
    let cv_label = rows
        .iter()
        .find_map(|r| r.cv.map(|c| c.cv.label()))
        .unwrap_or_else(|| "CV".into());
    let mut classes: Vec<String> = Vec::new();
    for r in rows {
        for rep in [r.cv, r.gcv].into_iter().flatten() {
            for c in &rep.classes {
                if !classes.contains(c) {
                    classes.push(c.clone());
                }
            }
        }
    }
    let mut header = vec!["Algorithm".to_string(), format!("{cv_label} [%]"), "GCV [%]".to_string()];
    header.extend(classes.iter().map(|c| format!("{c} [%]")));
    let mut table = vec![header];
    for r in rows {
        let Some(any) = r.cv.or(r.gcv) else { continue };
        let mut line = vec![any.classifier.to_string()];
        line.push(r.cv.map(|c| pct(c.accuracy_mean, c.accuracy_std)).unwrap_or_else(|| "-".into()));
        line.push(r.gcv.map(|c| pct(c.accuracy_mean, c.accuracy_std)).unwrap_or_else(|| "-".into()));
        for class in &classes {
            let cell = any
                .per_class
                .iter()
                .find(|s| &s.class == class)
                .and_then(|s| Some(pct(s.mean?, s.std?)))
                .unwrap_or_else(|| "-".into());
            line.push(cell);
        }
        table.push(line);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|j| table.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}
