//! Prompt generators for the five formulations. Each builds N interleaved
//! chains, shuffles lines within each tier of facts, and asks about the
//! end of exactly one chain. Every distractor chain terminates in a
//! distinct acceptable answer, so the acceptable set is answer-complete.

use rand::seq::SliceRandom;
use rand::Rng;

use super::pools::{pools, take};
use super::{BenchError, Formulation, PromptCase};

pub fn gen_prompt<R: Rng>(
    formulation: Formulation,
    d: usize,
    n_chains: usize,
    rng: &mut R,
) -> Result<PromptCase, BenchError> {
    if n_chains < 2 {
        return Err(BenchError::Invalid(
            "need at least 2 chains for a nontrivial acceptable set".into(),
        ));
    }
    if let Some(expected) = formulation.fixed_d() {
        if d != expected {
            return Err(BenchError::FixedShape {
                formulation,
                expected,
                got: d,
            });
        }
    } else if d < 1 {
        return Err(BenchError::Invalid("need D >= 1".into()));
    }
    let case = match formulation {
        Formulation::Equations => gen_equations(d, n_chains, rng)?,
        Formulation::LivesWith => gen_lives_with(d, n_chains, rng)?,
        Formulation::Kingdoms => gen_kingdoms(n_chains, rng)?,
        Formulation::Functions => gen_functions(n_chains, rng)?,
        Formulation::Relatives => gen_relatives(n_chains, rng)?,
    };
    case.check()?;
    Ok(case)
}

/// A shuffled 0..n permutation.
fn perm<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn letters(offset: usize, n: usize) -> Result<Vec<char>, BenchError> {
    if offset + n > 26 {
        return Err(BenchError::PoolExhausted {
            pool: "letters",
            need: offset + n,
            have: 26,
        });
    }
    Ok((0..n).map(|i| (b'a' + (offset + i) as u8) as char).collect())
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn push_tier<R: Rng>(lines: &mut Vec<String>, mut tier: Vec<String>, rng: &mut R) {
    tier.shuffle(rng);
    lines.append(&mut tier);
}

fn gen_equations<R: Rng>(d: usize, n: usize, rng: &mut R) -> Result<PromptCase, BenchError> {
    if n > 10 {
        return Err(BenchError::Invalid("values are single digits; need n <= 10".into()));
    }
    // tier t uses the next n letters of the alphabet; chain identity is
    // shuffled within each tier
    let mut chain_var: Vec<Vec<char>> = Vec::with_capacity(d);
    for t in 0..d {
        let tier_letters = letters(n * t, n)?;
        let slots = perm(n, rng);
        chain_var.push((0..n).map(|c| tier_letters[slots[c]]).collect());
    }
    let values = perm(n, rng); // chain c resolves to digit values[c]

    let mut lines = Vec::with_capacity(n * d);
    push_tier(
        &mut lines,
        (0..n).map(|c| format!("{} = {}", chain_var[0][c], values[c])).collect(),
        rng,
    );
    for t in 1..d {
        push_tier(
            &mut lines,
            (0..n)
                .map(|c| format!("{} = {}", chain_var[t][c], chain_var[t - 1][c]))
                .collect(),
            rng,
        );
    }
    let q = rng.gen_range(0..n);
    let prompt = format!(
        "{}\nWhat is the value of {}? Say directly only the numeric value, without any other words.",
        lines.join("\n"),
        chain_var[d - 1][q]
    );
    Ok(PromptCase {
        formulation: Formulation::Equations,
        d,
        prompt,
        correct: values[q].to_string(),
        acceptable: (0..n).map(|v| v.to_string()).collect(),
    })
}

fn gen_lives_with<R: Rng>(d: usize, n: usize, rng: &mut R) -> Result<PromptCase, BenchError> {
    let p = pools();
    let names = take(&p.names, "names", n * d)?;
    let cities = take(&p.cities, "cities", n)?;
    let mut chain_name: Vec<Vec<&String>> = Vec::with_capacity(d);
    for t in 0..d {
        let slots = perm(n, rng);
        chain_name.push((0..n).map(|c| &names[n * t + slots[c]]).collect());
    }
    let city_of = perm(n, rng);

    let mut lines = Vec::with_capacity(n * d);
    push_tier(
        &mut lines,
        (0..n)
            .map(|c| format!("{} lives in {}", chain_name[0][c], cities[city_of[c]]))
            .collect(),
        rng,
    );
    for t in 1..d {
        push_tier(
            &mut lines,
            (0..n)
                .map(|c| format!("{} lives with {}", chain_name[t][c], chain_name[t - 1][c]))
                .collect(),
            rng,
        );
    }
    let q = rng.gen_range(0..n);
    let prompt = format!(
        "{}\nWhere does {} live? Say directly only the name of the city, without any other words.",
        lines.join("\n"),
        chain_name[d - 1][q]
    );
    let mut acceptable: Vec<String> = cities.to_vec();
    acceptable.sort();
    Ok(PromptCase {
        formulation: Formulation::LivesWith,
        d,
        prompt,
        correct: cities[city_of[q]].clone(),
        acceptable,
    })
}

/// Plural adherent form of a religion: "harmonianism" -> "Harmonianists".
fn adherents(religion: &str) -> String {
    capitalize(&format!("{}sts", &religion[..religion.len() - 2]))
}

fn gen_kingdoms<R: Rng>(n: usize, rng: &mut R) -> Result<PromptCase, BenchError> {
    let p = pools();
    let names = take(&p.names, "names", n)?;
    let kingdoms = take(&p.kingdoms, "kingdoms", n)?;
    let religions = take(&p.religions, "religions", n)?;
    let meats = take(&p.meats, "meats", n)?;
    let minerals = take(&p.minerals, "minerals", n)?;
    let diseases = take(&p.diseases, "diseases", n)?;

    // chain c: names[c] -> kingdoms[k[c]] -> religions[r[c]] -> ...
    let k = perm(n, rng);
    let r = perm(n, rng);
    let m = perm(n, rng);
    let mi = perm(n, rng);
    let di = perm(n, rng);

    let mut lines = Vec::with_capacity(5 * n);
    push_tier(
        &mut lines,
        (0..n).map(|c| format!("{} lives in {}.", names[c], kingdoms[k[c]])).collect(),
        rng,
    );
    push_tier(
        &mut lines,
        (0..n)
            .map(|c| format!("{}ns believe in {}.", kingdoms[k[c]], religions[r[c]]))
            .collect(),
        rng,
    );
    push_tier(
        &mut lines,
        (0..n)
            .map(|c| format!("{} eat {}.", adherents(&religions[r[c]]), meats[m[c]]))
            .collect(),
        rng,
    );
    push_tier(
        &mut lines,
        (0..n)
            .map(|c| format!("{} contains {}.", capitalize(&meats[m[c]]), minerals[mi[c]]))
            .collect(),
        rng,
    );
    push_tier(
        &mut lines,
        (0..n)
            .map(|c| format!("{} causes {}.", minerals[mi[c]], diseases[di[c]]))
            .collect(),
        rng,
    );
    let q = rng.gen_range(0..n);
    let prompt = format!(
        "{}\nWho has {}? Say directly the name without other words.",
        lines.join("\n"),
        diseases[di[q]]
    );
    let mut acceptable: Vec<String> = names.to_vec();
    acceptable.sort();
    Ok(PromptCase {
        formulation: Formulation::Kingdoms,
        d: 5,
        prompt,
        correct: names[q].clone(),
        acceptable,
    })
}

fn gen_functions<R: Rng>(n: usize, rng: &mut R) -> Result<PromptCase, BenchError> {
    if n > 8 {
        return Err(BenchError::PoolExhausted {
            pool: "letters",
            need: 3 * n,
            have: 26,
        });
    }
    let funcs = letters(0, n)?;
    let aliases = letters(n, n)?;
    let vars = letters(2 * n, n)?;
    // each function is a random permutation table over 0..n
    let tables: Vec<Vec<usize>> = (0..n).map(|_| perm(n, rng)).collect();
    let alias_fn = perm(n, rng); // alias i names function alias_fn[i]
    let var_val = perm(n, rng); // var i holds value var_val[i]

    // table block stays in canonical order, as do assignment left-hand
    // sides; the randomness lives in the right-hand sides
    let mut lines = Vec::with_capacity(n * n + 2 * n);
    for (f, table) in funcs.iter().zip(&tables) {
        for (x, y) in table.iter().enumerate() {
            lines.push(format!("{f}({x}) = {y}"));
        }
    }
    for (i, a) in aliases.iter().enumerate() {
        lines.push(format!("{a} = {}", funcs[alias_fn[i]]));
    }
    for (i, v) in vars.iter().enumerate() {
        lines.push(format!("{v} = {}", var_val[i]));
    }
    let qa = rng.gen_range(0..n);
    let qv = rng.gen_range(0..n);
    let prompt = format!(
        "{}\nWhat is the value of {}({})? Say directly only the numeric value, without any other words.",
        lines.join("\n"),
        aliases[qa],
        vars[qv]
    );
    Ok(PromptCase {
        formulation: Formulation::Functions,
        d: 3,
        prompt,
        correct: tables[alias_fn[qa]][var_val[qv]].to_string(),
        acceptable: (0..n).map(|v| v.to_string()).collect(),
    })
}

const RELATIONS: [&str; 4] = ["mother", "sister", "father", "brother"];

fn gen_relatives<R: Rng>(n: usize, rng: &mut R) -> Result<PromptCase, BenchError> {
    let p = pools();
    let persons = take(&p.persons, "persons", n)?;
    let relatives = take(&p.relatives, "relatives", 4 * n)?;
    let countries = take(&p.countries, "countries", 4 * n)?;
    let professions = take(&p.professions, "professions", n)?;

    // person i, relation r -> relative relatives[rel_of[4i + r]]
    let rel_of = perm(4 * n, rng);
    let country_of = perm(4 * n, rng); // relative j lives in countries[country_of[j]]
    let prof_of = perm(n, rng); // person i works as professions[prof_of[i]]
    // profession -> relation (covers all four relations when n >= 4)
    let rel_base = perm(4, rng);
    let prof_rel = |prof_idx: usize| RELATIONS[rel_base[prof_idx % 4]];

    let mut lines = Vec::with_capacity(9 * n + 4);
    push_tier(
        &mut lines,
        (0..4 * n)
            .map(|j| format!("{} lives in {}.", relatives[j], countries[country_of[j]]))
            .collect(),
        rng,
    );
    // family blocks shuffle as units; relation order inside stays fixed
    let mut families: Vec<Vec<String>> = (0..n)
        .map(|i| {
            RELATIONS
                .iter()
                .enumerate()
                .map(|(ri, rel)| {
                    format!("{}'s {} is {}.", persons[i], rel, relatives[rel_of[4 * i + ri]])
                })
                .collect()
        })
        .collect();
    families.shuffle(rng);
    lines.extend(families.into_iter().flatten());
    push_tier(
        &mut lines,
        (0..n)
            .map(|i| {
                format!(
                    "{}s live with their {}s.",
                    capitalize(&professions[i]),
                    prof_rel(i)
                )
            })
            .collect(),
        rng,
    );
    push_tier(
        &mut lines,
        (0..n)
            .map(|i| {
                let prof = &professions[prof_of[i]];
                format!("{} works as {} {}.", persons[i], article(prof), prof)
            })
            .collect(),
        rng,
    );
    let q = rng.gen_range(0..n);
    let prompt = format!(
        "{}\nWhere does {} live? Say directly only the name, without any other words.",
        lines.join("\n"),
        persons[q]
    );
    // follow the chain: person -> profession -> relation -> relative -> country
    let relation = prof_rel(prof_of[q]);
    let ri = RELATIONS.iter().position(|r| *r == relation).expect("fixed set");
    let relative = rel_of[4 * q + ri];
    let mut acceptable: Vec<String> = countries.to_vec();
    acceptable.sort();
    Ok(PromptCase {
        formulation: Formulation::Relatives,
        d: 4,
        prompt,
        correct: countries[country_of[relative]].clone(),
        acceptable,
    })
}
