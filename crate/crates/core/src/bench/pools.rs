//! Word pools for the prompt generators. The first entries of each pool
//! are the ones appearing in the reference transcripts; the rest are
//! same-style extensions so more chains can be interleaved. The lists
//! live in `data/bench_pools.json`, not in code.

use std::sync::OnceLock;

use serde::Deserialize;

use super::BenchError;

#[derive(Debug, Deserialize)]
pub struct Pools {
    pub names: Vec<String>,
    pub cities: Vec<String>,
    pub kingdoms: Vec<String>,
    pub religions: Vec<String>,
    pub meats: Vec<String>,
    pub minerals: Vec<String>,
    pub diseases: Vec<String>,
    pub persons: Vec<String>,
    pub relatives: Vec<String>,
    pub countries: Vec<String>,
    pub professions: Vec<String>,
}

const POOLS_JSON: &str = include_str!("../../../../data/bench_pools.json");

pub fn pools() -> &'static Pools {
    static POOLS: OnceLock<Pools> = OnceLock::new();
    POOLS.get_or_init(|| serde_json::from_str(POOLS_JSON).expect("bench_pools.json is well-formed"))
}

/// First `need` entries of a pool, or a pool-exhaustion error.
pub fn take<'a>(
    pool: &'a [String],
    pool_name: &'static str,
    need: usize,
) -> Result<&'a [String], BenchError> {
    if pool.len() < need {
        return Err(BenchError::PoolExhausted {
            pool: pool_name,
            need,
            have: pool.len(),
        });
    }
    Ok(&pool[..need])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_are_usable() {
        let p = pools();
        let all: [(&str, &[String]); 11] = [
            ("names", &p.names),
            ("cities", &p.cities),
            ("kingdoms", &p.kingdoms),
            ("religions", &p.religions),
            ("meats", &p.meats),
            ("minerals", &p.minerals),
            ("diseases", &p.diseases),
            ("persons", &p.persons),
            ("relatives", &p.relatives),
            ("countries", &p.countries),
            ("professions", &p.professions),
        ];
        for (name, pool) in all {
            assert!(pool.len() >= 4, "{name} too small");
            let mut uniq: Vec<&String> = pool.iter().collect();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), pool.len(), "{name} has duplicates");
        }
        // morphology the kingdoms generator relies on
        for k in &p.kingdoms {
            assert!(k.ends_with('a'), "demonym rule needs -a kingdoms: {k}");
        }
        for r in &p.religions {
            assert!(r.ends_with("ism"), "adherent rule needs -ism religions: {r}");
        }
        // the two relatives name pools must not collide
        for person in &p.persons {
            assert!(!p.relatives.contains(person), "{person} in both pools");
        }
        assert!(matches!(
            take(&p.kingdoms, "kingdoms", 100),
            Err(BenchError::PoolExhausted { pool: "kingdoms", .. })
        ));
    }
}
