use std::fs;
use std::path::{Path, PathBuf};

use holo_core::analytics::{generate, load_pair, SyntheticParams};
use holo_core::scenario::{builtin, BUILTIN_SCENARIOS};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

#[test]
fn bundled_scenarios_match_generators() {
    for name in BUILTIN_SCENARIOS {
        let path = root().join(format!("scenarios/{name}.jsonl"));
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, builtin(name, 0).unwrap().to_jsonl(), "{name} is stale; regenerate with gen-scenarios");
    }
}

#[test]
fn bundled_datasets_match_generator() {
    let data = root().join("../../data");
    for (dir, params) in [("synthetic", SyntheticParams::default()), ("synthetic_null", SyntheticParams::null())] {
        let pair = generate(&params).unwrap();
        let (a, b) = load_pair(&data.join(dir)).unwrap();
        for (label, got, want) in [("a", &a, &pair.a), ("b", &b, &pair.b)] {
            assert_eq!(got.manifest, want.manifest, "{dir} group {label}");
            assert_eq!(got.behavior, want.behavior, "{dir} group {label}");
            assert_eq!(got.transcript, want.transcript, "{dir} group {label}");
        }
        assert_eq!(a.audio.map(|x| x.to_pcm16()), pair.audio_a, "{dir} audio a");
        assert_eq!(b.audio.map(|x| x.to_pcm16()), pair.audio_b, "{dir} audio b");
    }
}
