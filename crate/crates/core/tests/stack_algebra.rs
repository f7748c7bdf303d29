use pdcfa_core::pushdown::{net, stackify, StackAction};
use proptest::prelude::*;

fn action() -> impl Strategy<Value = StackAction<u8>> {
    prop_oneof![
        Just(StackAction::Eps),
        (0u8..3).prop_map(StackAction::Push),
        (0u8..3).prop_map(StackAction::Pop),
    ]
}

fn actions() -> impl Strategy<Value = Vec<StackAction<u8>>> {
    prop::collection::vec(action(), 0..=10)
}

/// Run the actions on an explicit stack, failing on any pop that does not
/// match the top.
fn simulate(actions: &[StackAction<u8>]) -> Option<Vec<u8>> {
    let mut stack = Vec::new();
    for a in actions {
        match a {
            StackAction::Eps => {}
            StackAction::Push(f) => stack.push(*f),
            StackAction::Pop(f) => {
                if stack.pop() != Some(*f) {
                    return None;
                }
            }
        }
    }
    stack.reverse();
    Some(stack)
}

fn is_normal(xs: &[StackAction<u8>]) -> bool {
    !xs.contains(&StackAction::Eps)
        && xs
            .windows(2)
            .all(|w| !matches!((&w[0], &w[1]), (StackAction::Push(a), StackAction::Pop(b)) if a == b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn net_is_idempotent_and_normal(xs in actions()) {
        let once = net(&xs);
        prop_assert_eq!(net(&once), once.clone());
        prop_assert!(is_normal(&once));
    }

    #[test]
    fn stackify_defined_exactly_without_pops(xs in actions()) {
        let pop_free = net(&xs).iter().all(|a| !a.is_pop());
        prop_assert_eq!(stackify(&xs).is_some(), pop_free);
    }

    #[test]
    fn stackify_matches_explicit_stack(xs in actions()) {
        prop_assert_eq!(stackify(&xs), simulate(&xs));
    }

    #[test]
    fn net_preserves_effect(xs in actions(), ys in actions()) {
        // Appending the same suffix to a string and its normal form gives the
        // same normal form.
        let mut a = xs.clone();
        a.extend(ys.iter().cloned());
        let mut b = net(&xs);
        b.extend(ys.iter().cloned());
        prop_assert_eq!(net(&a), net(&b));
    }
}
