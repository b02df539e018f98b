use std::time::Instant;

use cril_core::corpus;
use cril_core::ltsi::Lts;
use cril_core::verify::{explore, CheckOptions, Checker, ExploreOptions};

fn main() {
    for (name, p) in [
        ("shared", corpus::shared()),
        ("racy", corpus::airline_racy()),
        ("semaphore", corpus::airline_semaphore()),
    ] {
        let lts = Lts::new(p).unwrap();
        let t = Instant::now();
        let g = explore(&lts, ExploreOptions::default());
        println!(
            "{name}: {} states {} edges truncated={} in {:?}",
            g.state_count(),
            g.edges.len(),
            g.truncated,
            t.elapsed()
        );
        let t = Instant::now();
        let c = Checker::new(&lts, &g);
        println!("  events {} in {:?}", c.events().len(), t.elapsed());
        for p in CheckOptions::default()
            .properties
            .into_iter()
            .chain([cril_core::verify::Property::Cl])
        {
            let t = Instant::now();
            let r = c.check(p, 12);
            println!(
                "  {p}: ok={} checked={} partial={} in {:?}",
                r.ok,
                r.checked,
                r.partial,
                t.elapsed()
            );
            if let Some(ce) = &r.counterexample {
                println!("    {}", ce.message);
            }
        }
    }
}
