#![allow(dead_code)]

use std::path::Path;

use surge_core::pipeline::{ConfigMap, PipelineConfig};
use surge_core::synth::{self, SynthCorpus, SynthSpec};

/// Writes a corpus into `dir` and returns it.
pub fn write_corpus(dir: &Path, spec: &SynthSpec) -> SynthCorpus {
    let c = synth::generate(spec).expect("generate");
    c.write(dir).expect("write corpus");
    c
}

/// Config pointing at a corpus written by [`write_corpus`].
pub fn corpus_config(dir: &Path, out: &Path, extra: &[(&str, &str)]) -> PipelineConfig {
    let d = |f: &str| dir.join(f).display().to_string();
    let mut kv: Vec<(String, String)> = vec![
        ("input.points".into(), d("points.csv")),
        ("input.coast".into(), d("coast.csv")),
        ("input.storms".into(), d("storms.csv")),
        ("input.harmonics".into(), d("harmonics.csv")),
        ("input.gauges".into(), d("gauges")),
        ("output.dir".into(), out.display().to_string()),
    ];
    kv.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    let map = ConfigMap::load(None, Vec::<(String, String)>::new(), &kv).expect("config");
    PipelineConfig::from_map(map).expect("typed config")
}
