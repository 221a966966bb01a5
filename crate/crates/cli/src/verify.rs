use std::fs;
use std::path::Path;

use adaptctl::search::{program_hash, GenerationRecord};
use adaptctl::text::deserialize;
use anyhow::{bail, ensure, Context};

use crate::evolve::{repeat_dir, repeat_seed, Manifest, BEST, GENERATIONS, MANIFEST};

/// Reloads every artifact of an `evolve` output directory and checks that
/// they agree with each other. Returns one summary line per repeat.
pub fn verify(out: &Path) -> anyhow::Result<Vec<String>> {
    let path = out.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    manifest.config.check().context("manifest config")?;
    ensure!(
        manifest.repeats.len() == manifest.config.repeats as usize,
        "manifest lists {} repeats, config asks for {}",
        manifest.repeats.len(),
        manifest.config.repeats
    );

    let mut lines = Vec::new();
    for (k, summary) in manifest.repeats.iter().enumerate() {
        let k = k as u32;
        ensure!(summary.repeat == k, "repeat {k} is listed as {}", summary.repeat);
        ensure!(
            summary.seed == repeat_seed(manifest.config.master_seed, k),
            "repeat {k}: seed does not follow from master_seed"
        );
        let dir = repeat_dir(out, k);
        let log_path = dir.join(GENERATIONS);
        let log = fs::read_to_string(&log_path).with_context(|| format!("reading {}", log_path.display()))?;
        let mut prev: Option<GenerationRecord> = None;
        let mut n = 0;
        for (i, line) in log.lines().enumerate() {
            let rec: GenerationRecord = serde_json::from_str(line)
                .with_context(|| format!("{} line {}", log_path.display(), i + 1))?;
            if let Some(p) = &prev {
                ensure!(
                    rec.evaluations_so_far > p.evaluations_so_far,
                    "{} line {}: evaluation count does not increase",
                    log_path.display(),
                    i + 1
                );
                ensure!(
                    rec.best_fitness.iter().zip(&p.best_fitness).all(|(a, b)| a >= b),
                    "{} line {}: best fitness decreased",
                    log_path.display(),
                    i + 1
                );
            }
            prev = Some(rec);
            n += 1;
        }
        let Some(last) = prev else {
            bail!("{} is empty", log_path.display());
        };
        ensure!(
            last.evaluations_so_far == summary.evaluations,
            "repeat {k}: log ends at {} evaluations, manifest says {}",
            last.evaluations_so_far,
            summary.evaluations
        );
        ensure!(last.best_fitness == summary.best_fitness, "repeat {k}: best fitness differs from the log");

        let prog_path = dir.join(BEST);
        let text = fs::read_to_string(&prog_path).with_context(|| format!("reading {}", prog_path.display()))?;
        let program = deserialize(&text).with_context(|| format!("parsing {}", prog_path.display()))?;
        if let Some(v) = program.validate().first() {
            bail!("{}: {v}", prog_path.display());
        }
        ensure!(
            program_hash(&program) == summary.champion_hash,
            "repeat {k}: {} does not match the manifest hash",
            prog_path.display()
        );
        lines.push(format!(
            "repeat {k}: {n} generation records, {} evaluations, champion {}",
            summary.evaluations,
            &summary.champion_hash[..12]
        ));
    }
    Ok(lines)
}
