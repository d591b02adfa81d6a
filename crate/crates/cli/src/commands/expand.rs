//! `expand`: candidate-set inspection for one seed code.

use anyhow::Result;
use serde::Serialize;

use icdverify::expansion::{expand, ExpansionConfig, Provenance};
use icdverify::icd_graph::CodeId;

use crate::args::ExpandArgs;
use crate::config::load_graph;

#[derive(Serialize)]
struct CandidateOut {
    code: String,
    why: Vec<Provenance>,
}

#[derive(Serialize)]
struct ExpandOut {
    seed: String,
    candidates: Vec<CandidateOut>,
}

pub fn run(args: ExpandArgs) -> Result<i32> {
    let bundle = load_graph(&args.graph)?;
    let seed = CodeId::new(&args.code)?;

    // With no relation flags at all, expand everything.
    let none_given = !(args.siblings || args.cousins || args.n1 || args.n2);
    let all = args.all || none_given;
    let cfg = ExpansionConfig {
        use_siblings: all || args.siblings,
        use_cousins: all || args.cousins,
        use_n1: all || args.n1,
        use_n2: all || args.n2,
        include_seed: !args.no_seed,
        billable_only: !args.non_billable,
        max_candidates: args.max,
    };

    let set = expand(&bundle.tree, &bundle.graph, &seed, &cfg)?;
    let out = ExpandOut {
        seed: set.seed.display_form(),
        candidates: set
            .candidates
            .iter()
            .map(|c| CandidateOut {
                code: c.code.display_form(),
                why: c.why.iter().copied().collect(),
            })
            .collect(),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}
