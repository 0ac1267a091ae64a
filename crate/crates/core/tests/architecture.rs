//! The QP builder must only see the network through prepared local models.

const BUILDER: &str = include_str!("../src/sqp/build.rs");

fn code_only(src: &str) -> String {
    src.lines()
        .map(|l| l.split("//").next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn builder_never_touches_the_network() {
    let code = code_only(BUILDER);
    for word in ["neural", "mlp", "Mlp", "forward", "value_jacobian_rows", "mlp_batched_eval"] {
        assert!(!code.contains(word), "QP builder references `{word}`");
    }
}

#[test]
fn builder_uses_the_stage_residual_interface() {
    assert!(code_only(BUILDER).contains("StageResidual"));
}
