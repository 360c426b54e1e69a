//! Run every stage on a generated scenario and write the reports to a
//! temporary directory.

use hybridcast::harness::{run_pipeline, PipelineConfig};

fn main() -> hybridcast::Result<()> {
    let text = "scenario = smoke\nseed = 4\nnum_estimators = 60\nstrategies = st-mse,q50,naive,perfect\n";
    let mut cfg = PipelineConfig::parse(text)?;
    cfg.out_dir = std::env::temp_dir().join("hybridcast-example");
    let out = run_pipeline(&cfg, text)?;

    for m in &out.reports.metrics {
        println!("{:<16} {:<15} {:>10.3}", m.stage, m.metric, m.value);
    }
    if let Some(bt) = &out.reports.backtest {
        for s in &bt.summaries {
            println!("{:<12} revenue {:>14.0}", s.strategy.name(), s.total_revenue);
        }
    }
    println!("wrote {} files to {}", out.files.len(), cfg.out_dir.display());
    Ok(())
}
