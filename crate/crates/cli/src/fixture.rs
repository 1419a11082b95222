//! A synthetic, fully offline corpus: registry, tuples, templates, contexts and a
//! config wired to the in-process mocks. Used by `relgen fixture` and the tests.

use std::path::{Path, PathBuf};

use relgen_core::generation::prompts::ContextSnippet;
use relgen_core::store::{to_jsonl, write_atomic, StoreError};
use relgen_core::types::{BucketKey, EntityType, RelationTuple};
use relgen_core::util::relation_words;

use EntityType::{Location as L, Organization as O, Person as P};

const PAIRS: [(EntityType, EntityType); 9] = [
    (P, P),
    (P, L),
    (P, O),
    (L, L),
    (L, P),
    (L, O),
    (O, O),
    (O, P),
    (O, L),
];

const PREFIXES: [&str; 9] = [
    "former",
    "current",
    "founding",
    "honorary",
    "principal",
    "regional",
    "acting",
    "chief",
    "associate",
];
const NOUNS: [&str; 10] = [
    "partner", "sponsor", "member", "owner", "director", "advisor", "rival", "supplier", "tenant",
    "patron",
];

const CONSONANTS: [char; 12] = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'r', 's', 't', 'v'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixture {
    /// Distinct relation labels; each appears with three type pairs.
    pub relations: usize,
    pub tuples_per_bucket: usize,
    /// Every n-th entity has no context paragraph.
    pub context_gap_every: usize,
    pub seed: u64,
}

impl Default for Fixture {
    fn default() -> Self {
        Self {
            relations: 85,
            tuples_per_bucket: 5,
            context_gap_every: 20,
            seed: 7,
        }
    }
}

pub struct FixtureFiles {
    pub config: PathBuf,
    pub keys: usize,
    pub tuples: usize,
}

/// Six-letter consonant-vowel stem. Equal-length stems are never substrings of each other.
fn stem(n: u64) -> String {
    let mut n = n;
    let mut s = String::with_capacity(6);
    for i in 0..3 {
        let syl = (n % 60) as usize;
        n /= 60;
        let c = CONSONANTS[syl / 5];
        s.push(if i == 0 { c.to_ascii_uppercase() } else { c });
        s.push(VOWELS[syl % 5]);
    }
    s
}

fn entity(t: EntityType, n: u64) -> String {
    match t {
        P => format!("{} {}", stem(n), stem(n.wrapping_mul(7919) % 216_000)),
        L => format!("Port {}", stem(n)),
        O => format!("{} Holdings", stem(n)),
    }
}

fn relation_label(i: usize) -> String {
    let noun = NOUNS[i % NOUNS.len()];
    let prefix = PREFIXES[(i / NOUNS.len()) % PREFIXES.len()];
    let mut cap = noun.to_string();
    cap[..1].make_ascii_uppercase();
    format!("{prefix}{cap}")
}

impl Fixture {
    pub fn keys(&self) -> Vec<BucketKey> {
        let mut keys = Vec::new();
        for i in 0..self.relations {
            let r = relation_label(i);
            for j in 0..3 {
                let (t1, t2) = PAIRS[(i + 3 * j) % PAIRS.len()];
                keys.push(BucketKey::new(t1, r.clone(), t2));
            }
        }
        keys
    }

    pub fn tuples(&self) -> Vec<RelationTuple> {
        let mut out = Vec::new();
        let mut serial = 0u64;
        for key in self.keys() {
            for _ in 0..self.tuples_per_bucket {
                // 7919 is coprime with 108,000, so distinct serials get distinct stems.
                let a = (serial + self.seed) * 7919 % 108_000;
                let e1 = entity(key.t1, (2 * a) % 216_000);
                let e2 = entity(key.t2, (2 * a + 1) % 216_000);
                serial += 1;
                let t = RelationTuple::new(
                    format!("t{serial:05}"),
                    e1,
                    key.t1,
                    key.r.clone(),
                    e2,
                    key.t2,
                )
                .expect("fixture tuple is valid");
                out.push(t);
            }
        }
        out
    }

    pub fn registry_tsv(&self) -> String {
        let mut s = String::from("# t1\trelation\tt2\n");
        for k in self.keys() {
            s.push_str(&format!("{}\t{}\t{}\n", k.t1, k.r, k.t2));
        }
        s
    }

    pub fn templates_tsv(&self) -> String {
        let mut s = String::new();
        for k in self.keys() {
            let words = relation_words(&k.r);
            s.push_str(&format!(
                "{}\t{}\t{}\t{{E1}} is the {words} of {{E2}}.\n",
                k.t1, k.r, k.t2
            ));
        }
        s
    }

    pub fn contexts(&self, tuples: &[RelationTuple]) -> Vec<ContextSnippet> {
        let mut out = Vec::new();
        let mut n = 0usize;
        for t in tuples {
            for (e, ty) in [(&t.e1, t.t1), (&t.e2, t.t2)] {
                n += 1;
                if self.context_gap_every > 0 && n.is_multiple_of(self.context_gap_every) {
                    continue;
                }
                let kind = match ty {
                    P => "a person",
                    L => "a place",
                    O => "an organization",
                };
                out.push(ContextSnippet {
                    entity: e.clone(),
                    text: format!(
                        "{e} is {kind} listed in the synthetic gazetteer.\n\nLater records add little beyond the name."
                    ),
                    source: format!("gazetteer:{}", e.replace(' ', "_")),
                });
            }
        }
        out
    }

    pub fn config_toml(&self) -> String {
        format!(
            r#"seed = {seed}

[data]
registry = "registry.tsv"
tuples = "tuples.jsonl"
templates = "templates.tsv"
contexts = "contexts.jsonl"

[sample]
quota_per_bucket = {quota}

[split]
test_per_bucket = 1
dev_fraction = 0.2

[generation]
gold = "gold"
ecb = "ecb"

[[backends]]
id = "gold"
kind = "template"

[[backends]]
id = "ecb"
kind = "ecb"

[[backends]]
id = "llama"
kind = "mock"
prompt_style = "numbered"
batch_size = 60
prompt_cost_per_1k = 0.0002
output_cost_per_1k = 0.0002

[[backends]]
id = "gpt-3.5"
kind = "mock"
prompt_cost_per_1k = 0.0005
output_cost_per_1k = 0.0015

[[backends]]
id = "flan-t5-webnlg"
kind = "mock"

[[backends]]
id = "mistral"
kind = "mock"
prompt_style = "numbered"
batch_size = 40
faults = {{ merge_every = 9, drop_every = 13 }}

[[backends]]
id = "gemini-pro"
kind = "fusion-model"
prompt_cost_per_1k = 0.000125
output_cost_per_1k = 0.000375

[silver]
a = {{ id = "pegasus" }}
b = {{ id = "humarin" }}

[ranking]
k = 3
reference = "silver"
priority = ["gpt-3.5", "llama", "flan-t5-webnlg", "mistral"]

[blend]
fuser = "gemini-pro"

[rc]
chunk = 16

[[rc.classifiers]]
id = "gpt-3.5"
style = "zero-shot"
oracle = true
error_rate = 0.35
unparseable_rate = 0.02
prompt_cost_per_1k = 0.0005
output_cost_per_1k = 0.0015

[[rc.classifiers]]
id = "gpt-3.5"
style = "few-shot"
oracle = true
error_rate = 0.25
unparseable_rate = 0.01
prompt_cost_per_1k = 0.0005
output_cost_per_1k = 0.0015

[[rc.classifiers]]
id = "llama"
style = "zero-shot"
"#,
            seed = self.seed,
            quota = self.tuples_per_bucket,
        )
    }

    /// Writes every fixture file into `dir` and returns the config path.
    pub fn write(&self, dir: &Path) -> Result<FixtureFiles, StoreError> {
        let tuples = self.tuples();
        let put = |name: &str, text: &str| write_atomic(&dir.join(name), text.as_bytes());
        put("registry.tsv", &self.registry_tsv())?;
        put("templates.tsv", &self.templates_tsv())?;
        put("tuples.jsonl", &to_jsonl(&tuples)?)?;
        put("contexts.jsonl", &to_jsonl(&self.contexts(&tuples))?)?;
        put("relgen.toml", &self.config_toml())?;
        Ok(FixtureFiles {
            config: dir.join("relgen.toml"),
            keys: self.relations * 3,
            tuples: tuples.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_shape() {
        let f = Fixture::default();
        let keys = f.keys();
        assert_eq!(keys.len(), 255);
        assert_eq!(keys.iter().collect::<HashSet<_>>().len(), 255);
        let tuples = f.tuples();
        assert_eq!(tuples.len(), 1275);
    }

    #[test]
    fn entities_are_unique_and_not_nested() {
        let tuples = Fixture::default().tuples();
        let names: Vec<&str> = tuples
            .iter()
            .flat_map(|t| [t.e1.as_str(), t.e2.as_str()])
            .collect();
        assert_eq!(names.iter().collect::<HashSet<_>>().len(), names.len());
        for t in &tuples {
            assert!(!t.e1.contains(&t.e2) && !t.e2.contains(&t.e1), "{t:?}");
        }
    }

    #[test]
    fn written_config_validates() {
        let dir = tempfile::tempdir().unwrap();
        let files = Fixture::default().write(dir.path()).unwrap();
        let loaded = crate::config::LoadedConfig::load(&files.config).unwrap();
        loaded.config.validate().unwrap();
    }
}
