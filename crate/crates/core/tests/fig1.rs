use loopfree::engine::{run, RunOptions};
use loopfree::experiment::subtree_exits;
use loopfree::scenario::{bundled, Scenario};
use loopfree::verify::{bfs_oracle, legitimate, passage_holds, passage_strict};
use loopfree::{Guards, Rule};

fn replay(guards: Guards) -> (Scenario, loopfree::ExecutionTrace) {
    let mut s = Scenario::parse(bundled::FIG1).unwrap();
    s.guards = guards;
    let t = run(
        &s.configuration(),
        s.daemon(),
        &s.events,
        |c| c.is_terminal(),
        RunOptions::new(s.budget).with_snapshots(),
    )
    .unwrap();
    (s, t)
}

#[test]
fn narrative_milestones() {
    for guards in Guards::ALL {
        let (s, t) = replay(guards);
        let v = s.id("v").unwrap();
        let dynamic: Vec<u32> = t
            .firings_of(v)
            .filter(|(_, f)| f.rule == Rule::Dynamic)
            .map(|(_, f)| f.after.new_level)
            .collect();
        // a level of 5 is not sufficient, so v propagates again
        assert_eq!(dynamic.first(), Some(&5), "{guards}");
        assert!(dynamic.len() >= 2, "{guards}: {dynamic:?}");
        let exits = subtree_exits(&t, v);
        assert!(
            exits.iter().any(|x| x.rule == Rule::SafeChangeP),
            "{guards}: {exits:?}"
        );
        let end = &t.final_config;
        assert!(legitimate(end).holds, "{guards}");
        let dist = bfs_oracle(end.graph());
        assert_eq!(end.state(v).level, dist[&v]);
        assert!(passage_holds(&t, &s.events[0]).unwrap().holds);
        assert!(passage_strict(&t, &s.events[0]).unwrap().holds);
    }
}

#[test]
fn d_reattaches_through_w() {
    let (s, t) = replay(Guards::Literal);
    let d = s.id("d").unwrap();
    let w = s.id("w").unwrap();
    assert_eq!(t.final_config.parent_of(d), Some(w));
    let exits: Vec<(String, String)> = subtree_exits(&t, s.id("v").unwrap())
        .into_iter()
        .map(|x| (s.name(x.node), s.name(x.new_parent)))
        .collect();
    let pair = |a: &str, b: &str| (a.to_string(), b.to_string());
    assert_eq!(exits, [pair("d", "w"), pair("c1", "d")]);
}
