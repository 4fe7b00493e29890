use feller_uniq::expr::{BinOp, Func, Node};
use feller_uniq::Expr;
use proptest::prelude::*;

fn node() -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![(0.0f64..1e3).prop_map(Node::Num), (1e-9f64..1e-3).prop_map(Node::Num), Just(Node::Var(0)),];
    leaf.prop_recursive(5, 48, 2, |inner| {
        let bin =
            prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow),];
        prop_oneof![
            inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
            (bin, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Node::Bin(op, Box::new(a), Box::new(b))),
            (0..Func::ALL.len(), inner.clone(), inner).prop_map(|(k, a, b)| {
                let f = Func::ALL[k];
                let args = if f.arity() == 2 { vec![a, b] } else { vec![a] };
                Node::Call(f, args)
            }),
        ]
    })
}

proptest! {
    #[test]
    fn display_then_parse_is_identity(root in node()) {
        let e = Expr::from_node(root, vec!["x".into()]);
        let text = e.to_string();
        let back = Expr::parse(&text, "x").unwrap();
        prop_assert_eq!(&back, &e, "{}", text);
    }

    #[test]
    fn reparsed_expression_evaluates_the_same(root in node(), x in -3.0f64..3.0) {
        let e = Expr::from_node(root, vec!["x".into()]);
        let back = Expr::parse(&e.to_string(), "x").unwrap();
        match (e.eval(x), back.eval(x)) {
            (Ok(a), Ok(b)) => prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn polynomial_matches_horner(c in prop::collection::vec(-5.0f64..5.0, 1..6), x in -2.0f64..2.0) {
        let text = c
            .iter()
            .enumerate()
            .map(|(k, ck)| format!("({ck:?})*x^{k}"))
            .collect::<Vec<_>>()
            .join(" + ");
        let got = Expr::parse(&text, "x").unwrap().eval(x).unwrap();
        let want = c.iter().rev().fold(0.0, |acc, ck| acc * x + ck);
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{text}");
    }
}
