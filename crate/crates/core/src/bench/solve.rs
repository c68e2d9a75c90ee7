//! Reference solver: re-parses a case's prompt text and follows the
//! chain symbolically. It shares no state with the generators, so it
//! doubles as an independent oracle for them (and it can solve external
//! transcripts in the same layout).

use std::collections::HashMap;

use super::{BenchError, Formulation, PromptCase};

pub fn solve_case(case: &PromptCase) -> Result<String, BenchError> {
    let lines: Vec<&str> = case
        .prompt
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    let (question, facts) = lines
        .split_last()
        .ok_or_else(|| BenchError::Unsolvable("empty prompt".into()))?;
    match case.formulation {
        Formulation::Equations => solve_equations(facts, question),
        Formulation::LivesWith => solve_lives_with(facts, question),
        Formulation::Kingdoms => solve_kingdoms(facts, question),
        Formulation::Functions => solve_functions(facts, question),
        Formulation::Relatives => solve_relatives(facts, question),
    }
}

fn unsolvable(msg: impl Into<String>) -> BenchError {
    BenchError::Unsolvable(msg.into())
}

/// The queried entity: text between `prefix` and the question mark.
fn question_subject<'a>(question: &'a str, prefix: &str) -> Result<&'a str, BenchError> {
    let rest = question
        .split_once(prefix)
        .ok_or_else(|| unsolvable(format!("question lacks {prefix:?}: {question}")))?
        .1;
    rest.split('?')
        .next()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| unsolvable(format!("no subject in question: {question}")))
}

/// Follow `next` from `start` until `done` accepts the value, with a
/// step bound to catch cycles.
fn chase<'a>(
    start: &'a str,
    bound: usize,
    done: impl Fn(&str) -> bool,
    next: impl Fn(&'a str) -> Option<&'a str>,
) -> Result<&'a str, BenchError> {
    let mut cur = start;
    for _ in 0..=bound {
        if done(cur) {
            return Ok(cur);
        }
        cur = next(cur).ok_or_else(|| unsolvable(format!("chain breaks at {cur:?}")))?;
    }
    Err(unsolvable(format!("no terminal value reachable from {start:?}")))
}

fn solve_equations(facts: &[&str], question: &str) -> Result<String, BenchError> {
    let mut assign = HashMap::new();
    for f in facts {
        let (l, r) = f.split_once(" = ").ok_or_else(|| unsolvable(format!("bad fact: {f}")))?;
        assign.insert(l.trim(), r.trim());
    }
    let var = question_subject(question, "value of ")?;
    let value = chase(
        var,
        facts.len(),
        |v| v.chars().all(|c| c.is_ascii_digit()),
        |v| assign.get(v).copied(),
    )?;
    Ok(value.to_string())
}

fn solve_lives_with(facts: &[&str], question: &str) -> Result<String, BenchError> {
    let mut lives_in = HashMap::new();
    let mut lives_with = HashMap::new();
    for f in facts {
        if let Some((who, city)) = f.split_once(" lives in ") {
            lives_in.insert(who.trim(), city.trim());
        } else if let Some((who, other)) = f.split_once(" lives with ") {
            lives_with.insert(who.trim(), other.trim());
        } else {
            return Err(unsolvable(format!("bad fact: {f}")));
        }
    }
    let who = question_subject(question, "does ")?;
    let who = who.strip_suffix(" live").unwrap_or(who);
    let root = chase(
        who,
        facts.len(),
        |p| lives_in.contains_key(p),
        |p| lives_with.get(p).copied(),
    )?;
    Ok(lives_in[root].to_string())
}

fn solve_kingdoms(facts: &[&str], question: &str) -> Result<String, BenchError> {
    // forward maps keyed by the underlying entity; demonyms and adherent
    // forms are undone morphologically
    let mut kingdom_of = HashMap::new(); // name -> kingdom
    let mut religion_of = HashMap::new(); // kingdom -> religion
    let mut meat_of = HashMap::new(); // religion -> meat
    let mut mineral_of = HashMap::new(); // meat -> mineral
    let mut disease_of = HashMap::new(); // mineral -> disease
    for f in facts {
        let f = f.trim_end_matches('.');
        if let Some((name, kingdom)) = f.split_once(" lives in ") {
            kingdom_of.insert(name.to_string(), kingdom.to_string());
        } else if let Some((demonym, religion)) = f.split_once(" believe in ") {
            let kingdom = demonym
                .strip_suffix("ns")
                .ok_or_else(|| unsolvable(format!("odd demonym: {demonym}")))?;
            religion_of.insert(kingdom.to_string(), religion.to_string());
        } else if let Some((adherents, meat)) = f.split_once(" eat ") {
            let stem = adherents
                .strip_suffix("sts")
                .ok_or_else(|| unsolvable(format!("odd adherents: {adherents}")))?;
            let religion = format!("{}sm", stem.to_lowercase());
            meat_of.insert(religion, meat.to_string());
        } else if let Some((meat, mineral)) = f.split_once(" contains ") {
            mineral_of.insert(meat.to_lowercase(), mineral.to_string());
        } else if let Some((mineral, disease)) = f.split_once(" causes ") {
            disease_of.insert(mineral.to_string(), disease.to_string());
        } else {
            return Err(unsolvable(format!("bad fact: {f}")));
        }
    }
    let disease = question_subject(question, "has ")?;
    let back = |map: &HashMap<String, String>, value: &str, what: &str| -> Result<String, BenchError> {
        let mut hits = map.iter().filter(|(_, v)| v.as_str() == value);
        let hit = hits
            .next()
            .ok_or_else(|| unsolvable(format!("no {what} leads to {value:?}")))?;
        if hits.next().is_some() {
            return Err(unsolvable(format!("{what} for {value:?} is ambiguous")));
        }
        Ok(hit.0.clone())
    };
    let mineral = back(&disease_of, disease, "mineral")?;
    let meat = back(&mineral_of, &mineral, "meat")?;
    let religion = back(&meat_of, &meat, "religion")?;
    let kingdom = back(&religion_of, &religion, "kingdom")?;
    back(&kingdom_of, &kingdom, "name")
}

fn solve_functions(facts: &[&str], question: &str) -> Result<String, BenchError> {
    let mut tables: HashMap<&str, HashMap<&str, &str>> = HashMap::new();
    let mut assign: HashMap<&str, &str> = HashMap::new();
    for f in facts {
        let (l, r) = f.split_once(" = ").ok_or_else(|| unsolvable(format!("bad fact: {f}")))?;
        if let Some((fun, arg)) = l.split_once('(') {
            let arg = arg
                .strip_suffix(')')
                .ok_or_else(|| unsolvable(format!("bad application: {l}")))?;
            tables.entry(fun.trim()).or_default().insert(arg.trim(), r.trim());
        } else {
            assign.insert(l.trim(), r.trim());
        }
    }
    let call = question_subject(question, "value of ")?;
    let (alias, arg) = call
        .split_once('(')
        .and_then(|(a, rest)| rest.strip_suffix(')').map(|v| (a.trim(), v.trim())))
        .ok_or_else(|| unsolvable(format!("question is not a call: {call}")))?;
    let fun = chase(
        alias,
        facts.len(),
        |v| tables.contains_key(v),
        |v| assign.get(v).copied(),
    )?;
    let value = chase(
        arg,
        facts.len(),
        |v| v.chars().all(|c| c.is_ascii_digit()),
        |v| assign.get(v).copied(),
    )?;
    tables[fun]
        .get(value)
        .map(|v| v.to_string())
        .ok_or_else(|| unsolvable(format!("{fun}({value}) undefined")))
}

fn solve_relatives(facts: &[&str], question: &str) -> Result<String, BenchError> {
    let mut lives_in = HashMap::new(); // relative -> country
    let mut relative = HashMap::new(); // (person, relation) -> relative
    let mut relation_of_prof = HashMap::new(); // profession -> relation
    let mut profession_of = HashMap::new(); // person -> profession
    for f in facts {
        let f = f.trim_end_matches('.');
        if let Some((profs, relations)) = f.split_once(" live with their ") {
            let prof = profs
                .strip_suffix('s')
                .ok_or_else(|| unsolvable(format!("odd profession plural: {profs}")))?
                .to_lowercase();
            let rel = relations
                .strip_suffix('s')
                .ok_or_else(|| unsolvable(format!("odd relation plural: {relations}")))?;
            relation_of_prof.insert(prof, rel.to_string());
        } else if let Some((who, country)) = f.split_once(" lives in ") {
            lives_in.insert(who.to_string(), country.to_string());
        } else if let Some((person, rest)) = f.split_once("'s ") {
            let (rel, name) = rest
                .split_once(" is ")
                .ok_or_else(|| unsolvable(format!("bad relative fact: {f}")))?;
            relative.insert((person.to_string(), rel.to_string()), name.to_string());
        } else if let Some((person, job)) = f.split_once(" works as ") {
            let prof = job
                .strip_prefix("an ")
                .or_else(|| job.strip_prefix("a "))
                .unwrap_or(job);
            profession_of.insert(person.to_string(), prof.to_string());
        } else {
            return Err(unsolvable(format!("bad fact: {f}")));
        }
    }
    let person = question_subject(question, "does ")?;
    let person = person.strip_suffix(" live").unwrap_or(person);
    let prof = profession_of
        .get(person)
        .ok_or_else(|| unsolvable(format!("{person} has no profession")))?;
    let rel = relation_of_prof
        .get(prof)
        .ok_or_else(|| unsolvable(format!("no rule for profession {prof}")))?;
    let rel_name = relative
        .get(&(person.to_string(), rel.clone()))
        .ok_or_else(|| unsolvable(format!("{person} has no {rel}")))?;
    lives_in
        .get(rel_name)
        .cloned()
        .ok_or_else(|| unsolvable(format!("{rel_name} lives nowhere")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(formulation: Formulation, prompt: &str, correct: &str, acceptable: &[&str]) -> PromptCase {
        PromptCase {
            formulation,
            d: formulation.default_d(),
            prompt: prompt.to_string(),
            correct: correct.to_string(),
            acceptable: acceptable.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn solves_a_minimal_equations_chain() {
        let c = case(
            Formulation::Equations,
            "b = 2\na = 1\nd = b\nc = a\nWhat is the value of c? Say directly only the numeric value, without any other words.",
            "1",
            &["1", "2"],
        );
        assert_eq!(solve_case(&c).unwrap(), "1");
    }

    #[test]
    fn reports_broken_chains() {
        let c = case(
            Formulation::Equations,
            "a = b\nWhat is the value of a? Say directly only the numeric value, without any other words.",
            "0",
            &["0", "1"],
        );
        assert!(matches!(solve_case(&c), Err(BenchError::Unsolvable(_))));
        // cycle
        let c = case(
            Formulation::Equations,
            "a = b\nb = a\nWhat is the value of a? Say directly only the numeric value, without any other words.",
            "0",
            &["0", "1"],
        );
        assert!(matches!(solve_case(&c), Err(BenchError::Unsolvable(_))));
    }

    #[test]
    fn solves_a_minimal_kingdoms_chain() {
        let c = case(
            Formulation::Kingdoms,
            "Bob lives in Silvania.\nAlice lives in Novaria.\nSilvanians believe in celestianism.\nNovarians believe in harmonianism.\nHarmonianists eat lamb.\nCelestianists eat chicken.\nLamb contains Zephyrium.\nChicken contains Nephryon.\nZephyrium causes Chronogy.\nNephryon causes Synthemia.\nWho has Chronogy? Say directly the name without other words.",
            "Alice",
            &["Alice", "Bob"],
        );
        assert_eq!(solve_case(&c).unwrap(), "Alice");
    }

    #[test]
    fn solves_a_minimal_relatives_chain() {
        let c = case(
            Formulation::Relatives,
            "Jane lives in England.\nMike lives in Japan.\nJohn's mother is Jane.\nJohn's brother is Mike.\nDoctors live with their brothers.\nLawyers live with their mothers.\nJohn works as a doctor.\nWhere does John live? Say directly only the name, without any other words.",
            "Japan",
            &["England", "Japan"],
        );
        assert_eq!(solve_case(&c).unwrap(), "Japan");
    }

    #[test]
    fn solves_a_minimal_functions_case() {
        let c = case(
            Formulation::Functions,
            "a(0) = 1\na(1) = 0\nb(0) = 0\nb(1) = 1\nc = a\nd = b\ne = 0\nf = 1\nWhat is the value of c(f)? Say directly only the numeric value, without any other words.",
            "0",
            &["0", "1"],
        );
        assert_eq!(solve_case(&c).unwrap(), "0");
    }
}
