use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use serde_json::json;
use stockcast::datapipe::{
    clean, count_missing, daily_return, moving_average, shuffle_samples, write_csv, Column, MinMaxScaler, OhlcSeries,
};
use stockcast::marketdata::{cache_store, ApiConfig, FixtureTransport, MarketClient, OutputSize};
use stockcast::tensor::{RngState, Tensor};
use stockcast::training::{evaluate as eval_model, predict as predict_model, EvalReport};
use stockcast::zoo::{load, save, ModelMeta, Network};

use crate::pipeline::{ensure_dir, fit, partition_for, prepare, Arch};
use crate::plot::{line_chart, Line};
use crate::{
    CliError, CompareArgs, EvaluateArgs, ExploreArgs, FetchArgs, ImportArgs, Mode, PredictArgs, PreprocessArgs,
    Subset, TrainCmd,
};

const EVAL_SHUFFLE_STREAM: u64 = 3;

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn date_range(series: &OhlcSeries) -> String {
    match (series.first_date(), series.last_date()) {
        (Some(a), Some(b)) => format!("{a} .. {b}"),
        _ => "empty".into(),
    }
}

pub fn fetch(a: &FetchArgs) -> Result<PathBuf, CliError> {
    let mode = match a.mode {
        Mode::Compact => OutputSize::Compact,
        Mode::Full => OutputSize::Full,
    };
    let client = match &a.fixtures {
        Some(dir) => {
            let mut cfg = ApiConfig::new("fixture");
            cfg.mode = mode;
            cfg.max_retries = a.max_retries;
            // Recorded responses never change, so waiting between retries is pointless.
            MarketClient::new(cfg, Box::new(FixtureTransport::new(dir))).with_sleeper(|_| {})
        }
        None => {
            let mut cfg = ApiConfig::from_env()?;
            cfg.mode = mode;
            cfg.max_retries = a.max_retries;
            cfg.timeout = Duration::from_secs(a.timeout_secs.max(1));
            if let Some(url) = &a.base_url {
                cfg.base_url = url.clone();
            }
            MarketClient::http(cfg)
        }
    };
    let result = client.fetch_daily(&a.symbol)?;
    ensure_dir(&a.out)?;
    let path = cache_store(&result, &a.out)?;
    println!(
        "{}: {} rows ({}) from {} -> {}",
        result.series.symbol(),
        result.series.len(),
        date_range(&result.series),
        result.source.as_str(),
        path.display()
    );
    Ok(path)
}

pub fn import(a: &ImportArgs) -> Result<(), CliError> {
    let mut series = a.data.load()?;
    if let Some(sym) = &a.data.symbol {
        series = OhlcSeries::new(sym.clone(), series.records().to_vec())?;
    }
    ensure_dir(&a.out)?;
    let path = a.out.join(format!("{}.csv", series.symbol()));
    let mut buf = Vec::new();
    write_csv(&series, &mut buf)?;
    fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "{}: {} rows ({}), {} missing prices -> {}",
        series.symbol(),
        series.len(),
        date_range(&series),
        count_missing(&series).total(),
        path.display()
    );
    Ok(())
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn explore(a: &ExploreArgs) -> Result<(), CliError> {
    let raw = a.data.load()?;
    if raw.is_empty() {
        return Err(CliError::input(anyhow!("series is empty")));
    }
    println!("{}: {} rows ({})", raw.symbol(), raw.len(), date_range(&raw));
    println!("{:<8}{:>8}{:>9}{:>14}{:>14}{:>14}", "column", "count", "missing", "mean", "min", "max");
    for col in Column::ALL {
        let vals: Vec<f64> = raw.column(col).into_iter().flatten().filter(|v| v.is_finite()).collect();
        let n = vals.len();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let mean = if n > 0 { vals.iter().sum::<f64>() / n as f64 } else { f64::NAN };
        println!(
            "{:<8}{:>8}{:>9}{:>14.4}{:>14.4}{:>14.4}",
            col.name(),
            n,
            raw.len() - n,
            mean,
            lo,
            hi
        );
    }
    let imputed = count_missing(&raw).total();
    let series = clean(&raw).context("cleaning")?;
    println!("imputed {imputed} missing values");

    let closes = series.values(Column::Close)?;
    let n = closes.len();
    let mut ma_cols = Vec::new();
    for &w in &a.ma_windows {
        let mut col = vec![None; n];
        if w >= 1 && w <= n {
            for (i, v) in moving_average(&series, Column::Close, w)?.into_iter().enumerate() {
                col[i + w - 1] = Some(v);
            }
        }
        ma_cols.push((w, col));
    }
    let mut ret = vec![None; n];
    if n >= 2 {
        for (i, r) in daily_return(&series)?.into_iter().enumerate() {
            ret[i + 1] = Some(r);
        }
    }

    let mut csv = String::from("date,close");
    for (w, _) in &ma_cols {
        let _ = write!(csv, ",ma_{w}");
    }
    csv.push_str(",daily_return\n");
    for (i, d) in series.dates().iter().enumerate() {
        let _ = write!(csv, "{d},{}", closes[i]);
        for (_, col) in &ma_cols {
            let _ = write!(csv, ",{}", fmt_cell(col[i]));
        }
        let _ = writeln!(csv, ",{}", fmt_cell(ret[i]));
    }
    ensure_dir(&a.out)?;
    let sym = series.symbol().to_string();
    let eda = a.out.join(format!("{sym}_eda.csv"));
    write(&eda, &csv)?;

    let labels: Vec<String> = ma_cols.iter().map(|(w, _)| format!("MA {w}")).collect();
    let dense: Vec<Vec<f64>> = ma_cols
        .iter()
        .map(|(_, c)| c.iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect();
    let mut lines = vec![Line::new("close", &closes)];
    lines.extend(labels.iter().zip(&dense).map(|(l, v)| Line::new(l, v)));
    let svg = a.out.join(format!("{sym}_close.svg"));
    write(&svg, &line_chart(&format!("{sym} close"), &lines))?;
    println!("wrote {} and {}", eda.display(), svg.display());
    Ok(())
}

pub fn preprocess(a: &PreprocessArgs) -> Result<(), CliError> {
    let series = a.data.load()?;
    let p = prepare(&series, &a.window, !a.no_clean)?;
    let scaler = p.split.train.scaler().copied().expect("fit_scale attaches a scaler");
    let dates = series.dates();
    println!(
        "{} windows: {} train, {} test; scaler min {} max {}; imputed {}",
        p.dataset.len(),
        p.split.train.len(),
        p.split.test.len(),
        scaler.min,
        scaler.max,
        p.imputed
    );
    ensure_dir(&a.out)?;
    let summary = json!({
        "symbol": series.symbol(),
        "samples": p.dataset.len(),
        "train": p.split.train.len(),
        "test": p.split.test.len(),
        "imputed": p.imputed,
        "window": a.window.config(),
        "ratio": a.window.ratio,
        "shuffled": a.window.shuffle,
        "scaler": scaler,
        "fingerprint": p.dataset.fingerprint(),
    });
    write(&a.out.join("preprocess.json"), &serde_json::to_string_pretty(&summary)?)?;
    let mut csv = String::from("partition,target_date,target_scaled\n");
    for (name, part) in [("train", &p.split.train), ("test", &p.split.test)] {
        for (row, t) in part.target_rows().iter().zip(part.targets().data()) {
            let _ = writeln!(csv, "{name},{},{t}", dates[*row]);
        }
    }
    write(&a.out.join("split.csv"), &csv)?;
    Ok(())
}

fn report_line(r: &EvalReport) -> String {
    format!(
        "mse {:.6} mae {:.6} r2 {:.4} explained_variance {:.4} max_error {:.6} (n={})",
        r.mse, r.mae, r.r2, r.explained_variance, r.max_error, r.n_samples
    )
}

pub fn train(a: &TrainCmd) -> Result<(), CliError> {
    let series = a.data.load()?;
    let p = prepare(&series, &a.window, !a.train.no_clean)?;
    if p.imputed > 0 && !a.train.no_clean {
        println!("imputed {} missing values", p.imputed);
    }
    let fitted = fit(a.arch, &p, &a.window, &a.train)?;
    ensure_dir(&a.out)?;
    let model_path = a.out.join(format!("{}.model", a.arch.name()));
    let scaler = *p.split.train.scaler().expect("scaled");
    save(&fitted.net, scaler, &fitted.meta, &model_path)?;
    write(&a.out.join("history.csv"), &fitted.history.to_csv())?;
    let tl: Vec<f64> = fitted.history.records.iter().map(|r| r.train_loss).collect();
    let vl: Vec<f64> = fitted.history.records.iter().map(|r| r.val_loss).collect();
    write(
        &a.out.join("loss.svg"),
        &line_chart("loss", &[Line::new("training", &tl), Line::new("validation", &vl)]),
    )?;
    write(&a.out.join("report.json"), &serde_json::to_string_pretty(&fitted.report)?)?;
    let last = fitted.history.records.last().expect("epochs >= 1");
    println!(
        "{} params, {} epochs: train loss {:.6} val loss {:.6}",
        fitted.net.param_count(),
        last.epoch,
        last.train_loss,
        last.val_loss
    );
    println!("test: {}", report_line(&fitted.report));
    println!("saved {}", model_path.display());
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<EvalReport, CliError> {
    let (net, scaler, meta) = load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let series = a.data.load()?;
    let mut data = partition_for(&series, &meta, a.subset == Subset::Test)?.scaled_with(scaler)?;
    if a.shuffle {
        data = shuffle_samples(&data, &mut RngState::with_stream(a.seed, EVAL_SHUFFLE_STREAM))?;
    }
    let report = eval_model(&net, &data)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    ensure_dir(&a.out)?;
    write(&a.out.join("evaluation.json"), &text)?;
    Ok(report)
}

pub fn predict(a: &PredictArgs) -> Result<(), CliError> {
    let (net, scaler, meta) = load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let series = clean(&a.data.load()?).context("cleaning")?;
    let windows = partition_for(&series, &ModelMeta { shuffled: false, ..meta.clone() }, false)?;
    let scaled = windows.scaled_with(scaler)?;
    let preds: Vec<f64> = predict_model(&net, &scaled)?.into_iter().map(|v| scaler.inverse(v)).collect();
    let dates = series.dates();
    let closes = series.values(Column::Close)?;

    ensure_dir(&a.out)?;
    let mut csv = String::from("date,actual,predicted\n");
    for (row, p) in windows.target_rows().iter().zip(&preds) {
        let _ = writeln!(csv, "{},{},{}", dates[*row], closes[*row], p);
    }
    write(&a.out.join("predictions.csv"), &csv)?;

    let forecast = if a.steps > 0 { free_running(&net, &meta, scaler, &closes, a.steps)? } else { Vec::new() };
    if !forecast.is_empty() {
        let mut f = String::from("step,mode,predicted\n");
        for (i, v) in forecast.iter().enumerate() {
            let _ = writeln!(f, "{},free-running,{}", i + 1, v);
        }
        write(&a.out.join("forecast.csv"), &f)?;
    }
    let mut lines = vec![
        Line::new("actual", &closes),
        Line {
            label: "one-step-ahead",
            values: &preds,
            offset: windows.target_rows()[0],
        },
    ];
    if !forecast.is_empty() {
        lines.push(Line {
            label: "free-running forecast",
            values: &forecast,
            offset: closes.len(),
        });
    }
    write(
        &a.out.join("predictions.svg"),
        &line_chart(&format!("{} predictions", series.symbol()), &lines),
    )?;
    println!(
        "{} one-step-ahead predictions{} -> {}",
        preds.len(),
        if forecast.is_empty() { String::new() } else { format!(", {} free-running steps", forecast.len()) },
        a.out.display()
    );
    Ok(())
}

/// Feeds each prediction back as the newest input.
fn free_running(
    net: &Network,
    meta: &ModelMeta,
    scaler: MinMaxScaler,
    closes: &[f64],
    steps: usize,
) -> Result<Vec<f64>, CliError> {
    if meta.window.horizon != 1 {
        return Err(CliError::input(anyhow!("free-running forecasts need a horizon-1 model")));
    }
    let w = meta.window.window;
    let mut buf: Vec<f64> = closes[closes.len() - w..].iter().map(|&c| scaler.transform(c)).collect();
    let mut dims = vec![1];
    dims.extend_from_slice(net.input_dims());
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let x = Tensor::from_vec(dims.clone(), buf[buf.len() - w..].to_vec()).map_err(CliError::input)?;
        let y = net.predict(&x)?.data()[0];
        if !y.is_finite() {
            return Err(CliError::Numeric(anyhow!("non-finite forecast")));
        }
        buf.push(y);
        out.push(scaler.inverse(y));
    }
    Ok(out)
}

pub const COMPARE_HEADER: &str = "model,mse,mae,r2,explained_variance,max_error,n_samples";

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let series = a.data.load()?;
    let p = prepare(&series, &a.window, !a.train.no_clean)?;
    let mut csv = format!("{COMPARE_HEADER}\n");
    println!("{:<10}{:>12}{:>12}{:>10}{:>10}{:>12}{:>6}", "model", "mse", "mae", "r2", "ev", "max_error", "n");
    for arch in [Arch::CnnLstm, Arch::Lstm] {
        let r = fit(arch, &p, &a.window, &a.train)?.report;
        println!(
            "{:<10}{:>12.6}{:>12.6}{:>10.4}{:>10.4}{:>12.6}{:>6}",
            arch.name(),
            r.mse,
            r.mae,
            r.r2,
            r.explained_variance,
            r.max_error,
            r.n_samples
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            arch.name(),
            r.mse,
            r.mae,
            r.r2,
            r.explained_variance,
            r.max_error,
            r.n_samples
        );
    }
    ensure_dir(&a.out)?;
    write(&a.out.join("compare.csv"), &csv)?;
    Ok(())
}
