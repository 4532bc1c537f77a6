//! Golden files for emitted IR and backend source. Regenerate with
//! `UPDATE_GOLDEN=1 cargo test --test codegen_golden`.

use std::path::PathBuf;

use hesynth::codegen::{emit_json_ir, generate, lower, parse_json_ir, seal_bfv};
use hesynth::ir::{eval_slots, Opcode, Program};
use hesynth::kernels::{KernelParams, KernelRegistry};
use hesynth::spec::random_inputs;
use hesynth::synth::{synthesize, SynthConfig, SynthContext};

const GOLDEN_KERNELS: [&str; 3] = ["box_blur", "gx", "polynomial_regression"];

fn synthesized(kernel: &str) -> Program {
    let k = KernelRegistry::with_builtin().get(kernel).unwrap();
    let spec = k.spec(&KernelParams::default()).unwrap();
    let sketch = k.sketch(&spec).unwrap();
    synthesize(&SynthContext::default(), &spec, &sketch, &SynthConfig::default()).unwrap().final_solution.program
}

fn golden_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(file)
}

fn check_golden(file: &str, got: &str) {
    let path = golden_path(file);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, got).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    if want != got {
        let line = want.lines().zip(got.lines()).position(|(a, b)| a != b).unwrap_or(want.lines().count().min(got.lines().count()));
        panic!(
            "golden mismatch in {file} at line {}:\n  want: {:?}\n  got:  {:?}",
            line + 1,
            want.lines().nth(line),
            got.lines().nth(line)
        );
    }
}

#[test]
fn golden_artifacts() {
    let template = seal_bfv();
    for kernel in GOLDEN_KERNELS {
        let art = generate(kernel, &synthesized(kernel), &template).unwrap();
        assert_eq!(art.ir_file, format!("{kernel}.ir.json"));
        assert_eq!(art.source_file, format!("{kernel}.gen.cpp-text"));
        check_golden(&art.ir_file, &art.ir);
        check_golden(&art.source_file, &art.source);
    }
}

#[test]
fn ir_round_trips() {
    for kernel in GOLDEN_KERNELS {
        let lowered = lower(&synthesized(kernel));
        let text = emit_json_ir(kernel, &lowered).unwrap();
        let (meta, parsed) = parse_json_ir(&text).unwrap();
        assert_eq!(parsed, lowered);
        assert_eq!(meta.kernel, kernel);
        assert_eq!(emit_json_ir(kernel, &parsed).unwrap(), text);
    }
}

#[test]
fn relinearization_follows_every_multiply() {
    for kernel in GOLDEN_KERNELS {
        let original = synthesized(kernel);
        let lowered = lower(&original);
        let muls = lowered.body.iter().filter(|i| i.op == Opcode::MulCtCt).count();
        let relins = lowered.body.iter().filter(|i| i.op == Opcode::Relinearize).count();
        assert_eq!(muls, original.body.iter().filter(|i| i.op == Opcode::MulCtCt).count());
        assert_eq!(muls, relins, "{kernel}");
        for (i, instr) in lowered.body.iter().enumerate() {
            if instr.op == Opcode::MulCtCt {
                assert_eq!(lowered.body.get(i + 1).map(|n| n.op), Some(Opcode::Relinearize), "{kernel} @{i}");
            }
            if instr.op == Opcode::Relinearize {
                assert!(i > 0 && lowered.body[i - 1].op == Opcode::MulCtCt, "{kernel} @{i}");
            }
        }
    }
}

#[test]
fn lowered_programs_simulate_identically() {
    for kernel in GOLDEN_KERNELS {
        let original = synthesized(kernel);
        let lowered = lower(&original);
        for seed in 0..1000 {
            let inputs = random_inputs(&original.params, original.ct_inputs.len(), seed);
            assert_eq!(eval_slots(&lowered, &inputs).unwrap(), eval_slots(&original, &inputs).unwrap(), "{kernel} seed {seed}");
        }
    }
}
