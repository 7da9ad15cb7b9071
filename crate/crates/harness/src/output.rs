use std::fs;
use std::path::{Path, PathBuf};

use poison_core::baselines::GridSurface;

use crate::error::{HarnessError, Result};
use crate::landscape::Landscape;
use crate::runner::{summarize, RunRecord, TimingTable};

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(HarnessError::output(path))
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| HarnessError::Output {
        path: PathBuf::from("<csv>"),
        source: std::io::Error::other(e.to_string()),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(HarnessError::output(dir))
}

/// Per-C run table and summary for a poisoning curve, plus the JSON record
/// and a gnuplot script. Returns the written paths.
pub fn write_curve(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let name = &record.spec.name;
    let mut written = Vec::new();
    for &c in &record.spec.reg_c {
        let rows = record
            .rows_for(c)
            .map(|r| {
                vec![
                    num(r.fraction),
                    r.repetition.to_string(),
                    num(r.accuracy),
                    num(r.attack_seconds),
                    num(r.train_seconds),
                    opt(r.h),
                ]
            })
            .collect();
        let path = dir.join(format!("{name}_C{c}.csv"));
        write_file(
            &path,
            &csv_bytes(&["fraction", "repetition", "accuracy", "attack_seconds", "train_seconds", "h"], rows)?,
        )?;
        written.push(path);

        let rows = record
            .spec
            .fractions
            .iter()
            .map(|&f| {
                let acc = record.accuracy_at(c, f);
                let t = record.attack_time_at(c, f);
                vec![num(f), num(acc.mean), num(acc.std), num(t.mean), num(t.std)]
            })
            .collect();
        let path = dir.join(format!("{name}_C{c}_summary.csv"));
        write_file(&path, &csv_bytes(&["fraction", "acc_mean", "acc_std", "time_mean", "time_std"], rows)?)?;
        written.push(path);
    }
    written.push(write_record(record, dir)?);

    let mut gp = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'poison fraction'\nset ylabel 'test accuracy'\nset yrange [0:1]\nset title '{name}'\nplot "
    );
    let plots: Vec<String> = record
        .spec
        .reg_c
        .iter()
        .map(|c| format!("'{name}_C{c}_summary.csv' using 1:2:3 with yerrorlines title 'C={c}'"))
        .collect();
    gp.push_str(&plots.join(", \\\n     "));
    gp.push('\n');
    let path = dir.join(format!("{name}.gp"));
    write_file(&path, gp.as_bytes())?;
    written.push(path);
    Ok(written)
}

fn write_record(record: &RunRecord, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("{}_record.json", record.spec.name));
    let text = serde_json::to_string_pretty(record).expect("record serialises");
    write_file(&path, text.as_bytes())?;
    Ok(path)
}

/// Per-C tables of a prototype sweep: one row per `(k, repetition)` and a
/// summary per k (surrogate accuracy first, test accuracy second).
pub fn write_ablation(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let name = &record.spec.name;
    let mut written = Vec::new();
    for &c in &record.spec.reg_c {
        let rows = record
            .rows_for(c)
            .map(|r| {
                vec![
                    r.k.map(|k| k.to_string()).unwrap_or_default(),
                    r.repetition.to_string(),
                    num(r.surrogate_accuracy),
                    num(r.accuracy),
                    num(r.attack_seconds),
                    opt(r.h),
                ]
            })
            .collect();
        let path = dir.join(format!("{name}_ablation_C{c}.csv"));
        write_file(
            &path,
            &csv_bytes(&["k", "repetition", "surrogate_accuracy", "accuracy", "attack_seconds", "h"], rows)?,
        )?;
        written.push(path);

        let mut ks: Vec<usize> = record.rows_for(c).filter_map(|r| r.k).collect();
        ks.dedup();
        let rows = ks
            .iter()
            .map(|&k| {
                let s = record.surrogate_at_k(c, k);
                let t: Vec<f64> = record.rows_for(c).filter(|r| r.k == Some(k)).map(|r| r.accuracy).collect();
                let t = summarize(&t);
                vec![k.to_string(), num(s.mean), num(s.std), num(t.mean), num(t.std)]
            })
            .collect();
        let path = dir.join(format!("{name}_ablation_C{c}_summary.csv"));
        write_file(&path, &csv_bytes(&["k", "acc_mean", "acc_std", "test_mean", "test_std"], rows)?)?;
        written.push(path);
    }
    written.push(write_record(record, dir)?);
    Ok(written)
}

/// `timing.csv` with every repetition of both methods, and `timing_summary.csv`
/// with the per-budget means and the speedup of `a` over `b`.
pub fn write_timing(table: &TimingTable, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut rows = Vec::new();
    for (name, rec) in [(&table.name_a, &table.record_a), (&table.name_b, &table.record_b)] {
        for r in rec.rows.iter().filter(|r| r.count > 0) {
            rows.push(vec![
                name.clone(),
                num(r.reg_c),
                num(r.fraction),
                r.count.to_string(),
                r.repetition.to_string(),
                num(r.attack_seconds),
            ]);
        }
    }
    let detail = dir.join("timing.csv");
    write_file(
        &detail,
        &csv_bytes(&["method", "c", "fraction", "count", "repetition", "attack_seconds"], rows)?,
    )?;
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.reg_c),
                num(r.fraction),
                r.count.to_string(),
                num(r.a.mean),
                num(r.a.std),
                num(r.b.mean),
                num(r.b.std),
                num(r.speedup),
            ]
        })
        .collect();
    let summary = dir.join("timing_summary.csv");
    write_file(
        &summary,
        &csv_bytes(
            &["c", "fraction", "count", "time_mean_a", "time_std_a", "time_mean_b", "time_std_b", "speedup"],
            rows,
        )?,
    )?;
    Ok(vec![detail, summary])
}

fn surface_csv(s: &GridSurface<f64>, value: &str) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (i, &a) in s.x0.iter().enumerate() {
        for (j, &b) in s.x1.iter().enumerate() {
            rows.push(vec![num(a), num(b), num(s.values.get(i, j))]);
        }
    }
    csv_bytes(&["x0", "x1", value], rows)
}

/// `oracle.csv`, `kde.csv`, `boundary.json`, `summary.json` and `landscape.gp`.
pub fn write_landscape(l: &Landscape, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let files = [
        ("oracle.csv", surface_csv(&l.oracle, "loss")?),
        ("kde.csv", surface_csv(&l.kde, "likelihood")?),
        ("boundary.json", serde_json::to_vec_pretty(&l.boundary).expect("boundary serialises")),
        ("summary.json", serde_json::to_vec_pretty(&l.summary).expect("summary serialises")),
        ("landscape.gp", landscape_gp(l).into_bytes()),
    ];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn landscape_gp(l: &Landscape) -> String {
    let [w0, w1] = l.boundary.weights;
    let b = l.boundary.bias;
    let n = l.summary.resolution;
    format!(
        "set datafile separator ','\nset size ratio -1\nset multiplot layout 1,2\n\
         boundary(x) = -({w0} * x + {b}) / {w1}\n\
         set title 'bilevel objective (validation loss)'\n\
         plot 'oracle.csv' every ::1 using 1:2:3 with image notitle, boundary(x) with lines notitle\n\
         set title 'KDE objective (target-class density)'\n\
         plot 'kde.csv' every ::1 using 1:2:3 with image notitle, boundary(x) with lines notitle\n\
         unset multiplot\n# grid: {n} x {n}\n"
    )
}

