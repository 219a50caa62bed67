use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

/// Generator behind every stochastic choice in the crate.
pub type ProbeRng = Xoshiro256StarStar;

pub fn rng_from_seed(seed: u64) -> ProbeRng {
    ProbeRng::seed_from_u64(seed)
}

/// Whether the residual MLP block sits between representation and head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    WithoutMlp,
    WithMlp,
}

impl Setting {
    pub const BOTH: [Setting; 2] = [Setting::WithoutMlp, Setting::WithMlp];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::WithoutMlp => "without_mlp",
            Setting::WithMlp => "with_mlp",
        }
    }

    pub fn with_mlp(self) -> bool {
        self == Setting::WithMlp
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Setting {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "without_mlp" => Ok(Setting::WithoutMlp),
            "with_mlp" => Ok(Setting::WithMlp),
            _ => Err(crate::Error::Config(format!("unknown setting {s:?}"))),
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one training run.
///
/// FNV-1a over `seed` (8 bytes LE), the task name bytes, a 0xFF separator,
/// `layer` (2 bytes LE) and the setting byte (0 without, 1 with), finished
/// with the splitmix64 mixer. Stable across platforms and releases.
pub fn derive_run_seed(seed: u64, task: &str, layer: u16, setting: Setting) -> u64 {
    let mut h = FNV_OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    eat(&seed.to_le_bytes());
    eat(task.as_bytes());
    eat(&[0xff]);
    eat(&layer.to_le_bytes());
    eat(&[setting.with_mlp() as u8]);
    splitmix64(h)
}

/// 64-bit FNV-1a of `bytes`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Independent seed for the `index`-th sub-stream of `seed`.
pub fn derive_stream(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_stream() {
        let mut a = rng_from_seed(42);
        let mut b = rng_from_seed(42);
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn run_seeds_are_stable_and_distinct() {
        let s = derive_run_seed(0, "Tense", 7, Setting::WithMlp);
        assert_eq!(s, derive_run_seed(0, "Tense", 7, Setting::WithMlp));
        assert_ne!(s, derive_run_seed(0, "Tense", 7, Setting::WithoutMlp));
        assert_ne!(s, derive_run_seed(1, "Tense", 7, Setting::WithMlp));
        assert_ne!(s, derive_run_seed(0, "Tense", 8, Setting::WithMlp));
        assert_ne!(s, derive_run_seed(0, "SOMO", 7, Setting::WithMlp));
        // pinned so the derivation cannot drift silently
        assert_eq!(
            derive_run_seed(0, "", 0, Setting::WithoutMlp),
            splitmix64({
                let mut h = FNV_OFFSET;
                for b in [0u8; 8].iter().chain(&[0xff, 0, 0, 0]) {
                    h ^= *b as u64;
                    h = h.wrapping_mul(FNV_PRIME);
                }
                h
            })
        );
    }

    #[test]
    fn setting_names() {
        for s in Setting::BOTH {
            assert_eq!(s.as_str().parse::<Setting>().unwrap(), s);
        }
        assert!("w".parse::<Setting>().is_err());
    }
}
