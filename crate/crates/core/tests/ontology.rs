mod common;

use std::collections::BTreeMap;

use common::{sentence, ONTOLOGY_CASES};
use haabsa_core::dataset::Polarity;
use haabsa_core::ontology::*;
use proptest::prelude::*;

#[test]
fn bundled_ontology_cases() {
    let onto = Ontology::bundled();
    for (text, cat, outcome, rules) in ONTOLOGY_CASES {
        let v = onto.classify(&sentence(text, cat));
        assert_eq!(v.outcome, outcome, "{text}");
        let fired: Vec<u8> = v.hits.iter().map(|h| h.rule).collect();
        assert_eq!(fired, rules, "{text}");
    }
}

#[test]
fn loaded_ontology_matches_bundled() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/mini_ontology.json");
    let loaded = load_ontology(path.as_ref()).unwrap();
    let bundled = Ontology::bundled();
    let mut a: Vec<_> = loaded.forms().collect();
    let mut b: Vec<_> = bundled.forms().collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
}

const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];
const CATS: [&str; 3] = ["FOOD", "SERVICE", "PRICE"];

fn sentiment() -> impl Strategy<Value = Sentiment> {
    prop_oneof![Just(Sentiment::Positive), Just(Sentiment::Negative)]
}

fn ontology_file() -> impl Strategy<Value = OntologyFile> {
    // Every word gets at most one kind; 0 means absent.
    (
        prop::collection::vec(0u8..4, WORDS.len()),
        prop::collection::vec(sentiment(), WORDS.len()),
        prop::collection::vec(0usize..CATS.len(), WORDS.len()),
        prop::collection::vec(prop::collection::btree_map(0usize..CATS.len(), sentiment(), 1..3), WORDS.len()),
    )
        .prop_map(|(kinds, pols, cats, maps)| {
            let mut file = OntologyFile::default();
            for (i, w) in WORDS.iter().enumerate() {
                let form = w.to_string();
                match kinds[i] {
                    1 => file.generic.push(GenericEntry { form, polarity: pols[i] }),
                    2 => file.aspect_specific.push(AspectSpecificEntry {
                        form,
                        category: CATS[cats[i]].into(),
                        polarity: pols[i],
                    }),
                    3 => file.context_dependent.push(ContextDependentEntry {
                        form,
                        polarities: maps[i].iter().map(|(c, p)| (CATS[*c].to_string(), *p)).collect::<BTreeMap<_, _>>(),
                    }),
                    _ => {}
                }
            }
            file
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn at_most_one_rule_per_form_and_never_neutral(
        file in ontology_file(),
        words in prop::collection::vec(0usize..WORDS.len(), 1..10),
        cat in 0usize..CATS.len(),
    ) {
        let onto = Ontology::from_file_contents(file).unwrap();
        let text: Vec<&str> = words.iter().map(|&i| WORDS[i]).collect();
        let s = sentence(&text.join(" "), &format!("{}#GENERAL", CATS[cat]));
        let v = onto.classify(&s);
        let mut forms: Vec<&str> = v.hits.iter().map(|h| h.form.as_str()).collect();
        let n = forms.len();
        forms.sort();
        forms.dedup();
        prop_assert_eq!(forms.len(), n);
        for h in &v.hits {
            prop_assert_eq!(h.rule, onto.concept(&h.form).unwrap().rule_id());
        }
        prop_assert_ne!(v.outcome.polarity(), Some(Polarity::Neutral));
        prop_assert_eq!(v.outcome.is_conclusive(), !v.hits.is_empty()
            && v.hits.iter().all(|h| h.polarity == v.hits[0].polarity));
    }
}
