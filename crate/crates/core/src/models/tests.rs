use super::*;
use crate::env::{gen_markov, gen_rule_exception, EnvKind, EnvSpec};
use crate::info::conditional_entropy;

fn run(spec: &ModelSpec, stream: &SymbolStream) -> (Box<dyn PredictiveModel>, Vec<StepRecord>) {
    let mut m = spec.build_for(stream);
    let mut recs = Vec::with_capacity(stream.len());
    feed(m.as_mut(), spec, stream, 0..stream.len(), |_, r, _| recs.push(*r));
    (m, recs)
}

fn corr() -> ModelSpec {
    ModelSpec::default_for(Family::Correlational)
}

fn gen() -> ModelSpec {
    ModelSpec::default_for(Family::Generative)
}

#[test]
fn all_base_stream_has_no_exceptions_and_constant_model_cost() {
    let s = gen_rule_exception(0, 0.0, 2, 0.5, 5000, 1).unwrap();
    let (m, _) = run(&corr(), &s);
    assert_eq!(m.ledger().n_exceptions, 0);
    let first = m.ledger().history[0].l_model;
    assert!(m.ledger().history.iter().all(|r| r.l_model == first));
}

#[test]
fn correlational_exceptions_follow_binomial() {
    let s = gen_rule_exception(0, 0.05, 2, 0.5, 10_000, 7).unwrap();
    let (m, _) = run(&corr(), &s);
    let sigma = (10_000.0f64 * 0.05 * 0.95).sqrt();
    let n = m.ledger().n_exceptions as f64;
    assert!((n - 500.0).abs() < 3.0 * sigma, "{n}");
    let n_stored = s.symbols.iter().filter(|&&x| x != 0).count() as f64;
    assert!((n - n_stored).abs() <= 2.0);
}

#[test]
fn alternating_stream_makes_every_other_symbol_an_exception() {
    let s = SymbolStream::new((0..4000).map(|i| i % 2).collect(), 2, None).unwrap();
    let (m, _) = run(&corr(), &s);
    let n = m.ledger().n_exceptions as i64;
    assert!((n - 2000).abs() <= 1, "{n}");
}

#[test]
fn generative_exceptions_plateau() {
    let s = gen_rule_exception(0, 0.05, 2, 0.5, 10_000, 3).unwrap();
    let (m, _) = run(&gen(), &s);
    let h = &m.ledger().history;
    let early = h[4999].n_exceptions;
    let late = h[9999].n_exceptions - early;
    assert!((late as f64) < early as f64 / 4.0, "early {early} late {late}");
}

#[test]
fn deterministic_stream_residual_growth_vanishes() {
    let s = SymbolStream::new(vec![1; 5000], 2, None).unwrap();
    let (m, recs) = run(&gen(), &s);
    let tail: f64 = recs[4000..].iter().map(|r| r.surprise).sum::<f64>() / 1000.0;
    assert!(tail < 1e-3, "{tail}");
    assert!(m.ledger().l_residual < 10.0);
}

#[test]
fn generative_code_is_shorter_on_confounded_chain() {
    let s = EnvSpec::default_for(EnvKind::MarkovConfounded, 5).generate().unwrap();
    let (g, _) = run(&gen(), &s);
    let (c, _) = run(&corr(), &s);
    assert!(g.ledger().total_code() < c.ledger().total_code());
}

#[test]
fn ledger_matches_summed_surprise() {
    let s = gen_rule_exception(0, 0.1, 3, 0.5, 3000, 9).unwrap();
    for spec in [corr(), gen(), ModelSpec::Frozen] {
        let (m, recs) = run(&spec, &s);
        let sum: f64 = recs.iter().map(|r| r.surprise).sum();
        assert!((m.ledger().l_residual - sum).abs() < 1e-6);
        assert!(m.ledger().history.iter().all(|r| (0.0..=1.0).contains(&r.c_efficiency)));
    }
}

#[test]
fn efficiency_reference_points() {
    // Uniform predictor on a uniform binary stream explains nothing.
    let s = gen_markov(&Channel::uniform(2, 2), 4000, 2, None).unwrap();
    let (m, _) = run(&ModelSpec::Frozen, &s);
    let c = efficiency_functional(m.ledger(), EfficiencyMode::ExplainedRatio, None).unwrap();
    assert!(c.abs() < 1e-12);

    let s = SymbolStream::new(vec![1; 100], 2, None).unwrap();
    let mut perfect = FrozenModel::new(Channel::new(vec![vec![0.0, 1.0]]).unwrap());
    for &x in &s.symbols {
        perfect.update(x, 0);
    }
    let c = efficiency_functional(perfect.ledger(), EfficiencyMode::ExplainedRatio, None).unwrap();
    assert_eq!(c, 1.0);

    let empty = ModelLedger::new(2, 0.0);
    assert!(efficiency_functional(&empty, EfficiencyMode::ExplainedRatio, None).is_err());
    let single = ModelLedger::new(1, 0.0);
    let mut single = single;
    single.step(0.0, false, 0.0);
    assert_eq!(efficiency_functional(&single, EfficiencyMode::ExplainedRatio, None).unwrap(), 1.0);
}

#[test]
fn order_one_model_recovers_entropy_rate() {
    let p = Channel::new(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
    let s = gen_markov(&p, 100_000, 4, None).unwrap();
    // Analytic entropy rate of the symmetric chain: h(0.1).
    let h = -(0.1f64 * 0.1f64.log2() + 0.9 * 0.9f64.log2());
    assert!((h - 0.469).abs() < 1e-3);
    let (m, _) = run(&gen(), &s);
    let c = efficiency_functional(m.ledger(), EfficiencyMode::ExplainedRatio, None).unwrap();
    assert!((c - (1.0 - h)).abs() < 0.02, "{c}");

    let truth = s.truth.as_ref().unwrap();
    let eps = efficiency_functional(
        m.ledger(),
        EfficiencyMode::IbOfPredictor,
        Some((&m.predictor(), &truth.observed_joint)),
    )
    .unwrap();
    assert!((0.0..=1.0).contains(&eps));
    let mdl = efficiency_functional(m.ledger(), EfficiencyMode::MdlRatio, None).unwrap();
    assert!(mdl > 0.0 && mdl < 0.01);
}

#[test]
fn generative_model_cost_is_small_against_stream_entropy() {
    for kind in [EnvKind::RuleException, EnvKind::MarkovConfounded] {
        let s = EnvSpec::default_for(kind, 11).with_length(10_000).generate().unwrap();
        let spec = gen();
        let (m, _) = run(&spec, &s);
        let (truth, _) = truth_for(&spec, &s).unwrap();
        let total_h: f64 = (0..s.len())
            .map(|i| crate::info::entropy_unchecked(truth.row(spec.context_at(&s, i))))
            .sum();
        let ratio = m.ledger().l_model / total_h;
        assert!(ratio < 0.01, "{kind}: {ratio}");
    }
}

#[test]
fn generative_beats_correlational_after_burn_in() {
    for kind in [EnvKind::RuleException, EnvKind::MarkovConfounded] {
        let s = EnvSpec::default_for(kind, 21).generate().unwrap();
        let (g, _) = run(&gen(), &s);
        let (c, _) = run(&corr(), &s);
        for t in 2000..s.len() {
            assert!(
                g.ledger().history[t - 1].c_efficiency > c.ledger().history[t - 1].c_efficiency,
                "{kind} at t={t}"
            );
        }
        assert!(g.ledger().total_code() < c.ledger().total_code());
    }
}

#[test]
fn information_mass_shrinks_for_generative_model() {
    let s = EnvSpec::default_for(EnvKind::MarkovPlain, 2).with_length(20_000).generate().unwrap();
    let spec = gen();
    let (truth, freq) = truth_for(&spec, &s).unwrap();
    let mut m = spec.build_for(&s);
    let mut masses = Vec::new();
    feed(m.as_mut(), &spec, &s, 0..s.len(), |i, _, model| {
        if (i + 1) % 5000 == 0 {
            masses.push(information_mass(model, &truth, &freq));
        }
    });
    assert!(masses.last().unwrap() < &masses[0]);
    let j = s.truth.as_ref().unwrap().observed_joint.clone();
    assert!(conditional_entropy(&j, crate::info::Axis::X) > 0.0);
}

#[test]
fn spec_json_forms() {
    let s: ModelSpec = serde_json::from_str(r#"{"family":"correlational","allowance":0.0625}"#).unwrap();
    assert_eq!(s.family(), Family::Correlational);
    let g: ModelSpec = serde_json::from_str(r#"{"family":"generative","partition":"pooled"}"#).unwrap();
    assert_eq!(g.context_source(), ContextSource::Parent);
    assert!(serde_json::from_str::<ModelSpec>(r#"{"family":"generative","depth":3}"#).is_err());
}

#[test]
fn captured_information_is_mutual_information_minus_mass() {
    let s = EnvSpec::default_for(EnvKind::MarkovPlain, 4).with_length(3000).generate().unwrap();
    let spec = gen();
    let (truth, freq) = truth_for(&spec, &s).unwrap();
    let (m, _) = run(&spec, &s);
    let j = JointTable::from_marginal_channel(&freq, &truth).unwrap();
    let lhs = captured_information(m.as_ref(), &truth, &freq);
    let rhs = crate::info::mutual_information(&j) - information_mass(m.as_ref(), &truth, &freq);
    assert!((lhs - rhs).abs() < 1e-9, "{lhs} {rhs}");
    let frozen = FrozenModel::uniform(s.alphabet, freq.len());
    assert!(captured_information(&frozen, &truth, &freq) <= 1e-12);
}
