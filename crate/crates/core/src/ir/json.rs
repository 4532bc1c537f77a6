//! JSON document form of a [`Program`].
//!
//! ```json
//! {"params": {"n": 16, "t": 65537},
//!  "ct_inputs": ["c0"],
//!  "pt_consts": [{"name": "two", "slots": [2, 2, ...]}],
//!  "body": [{"op": "add-ct-ct", "lhs": {"src": "c0", "rot": -5}, "rhs": {"ct": {"src": "c0", "rot": 0}}}],
//!  "result": "%0"}
//! ```
//!
//! Sources are input names or `%k` for the k-th instruction. Rotation amounts
//! may be negative and are normalized to left rotations on parse.

use serde::{Deserialize, Serialize};

use super::{Instruction, NamedPt, Opcode, Operand, Program, PtValue, RingParams, Rhs, Source};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ProgramDoc {
    params: RingParams,
    ct_inputs: Vec<String>,
    #[serde(default)]
    pt_consts: Vec<PtDoc>,
    body: Vec<InstrDoc>,
    result: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct PtDoc {
    name: String,
    slots: Vec<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OperandDoc {
    src: String,
    #[serde(default)]
    rot: i64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RhsDoc {
    Ct(OperandDoc),
    Pt(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct InstrDoc {
    op: String,
    lhs: OperandDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rhs: Option<RhsDoc>,
}

fn source_name(p: &Program, s: Source) -> String {
    match s {
        Source::Input(i) => p.ct_inputs[i].clone(),
        Source::Inst(j) => format!("%{j}"),
    }
}

fn operand_doc(p: &Program, o: &Operand) -> OperandDoc {
    OperandDoc { src: source_name(p, o.src), rot: o.rot as i64 }
}

fn to_doc(p: &Program) -> ProgramDoc {
    ProgramDoc {
        params: p.params,
        ct_inputs: p.ct_inputs.clone(),
        pt_consts: p
            .pt_consts
            .iter()
            .map(|pt| PtDoc { name: pt.name.clone(), slots: pt.value.slots.iter().map(|&s| s as i64).collect() })
            .collect(),
        body: p
            .body
            .iter()
            .map(|i| InstrDoc {
                op: i.op.mnemonic().to_string(),
                lhs: operand_doc(p, &i.lhs),
                rhs: match i.rhs {
                    Rhs::Ct(o) => Some(RhsDoc::Ct(operand_doc(p, &o))),
                    Rhs::Pt(k) => Some(RhsDoc::Pt(p.pt_consts[k].name.clone())),
                    Rhs::None => None,
                },
            })
            .collect(),
        result: source_name(p, p.result),
    }
}

/// Serializes a program as pretty-printed JSON.
pub fn to_json(p: &Program) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_doc(p))?)
}

/// Serializes a program into a JSON value (for embedding in larger documents).
pub fn to_value(p: &Program) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(to_doc(p))?)
}

pub fn from_json(text: &str) -> Result<Program> {
    let doc: ProgramDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    from_doc(doc)
}

pub fn from_value(v: serde_json::Value) -> Result<Program> {
    let doc: ProgramDoc = serde_json::from_value(v).map_err(|e| Error::Parse(e.to_string()))?;
    from_doc(doc)
}

fn from_doc(doc: ProgramDoc) -> Result<Program> {
    let params = doc.params;
    params.validate().map_err(|e| Error::Parse(e.to_string()))?;
    let resolve = |name: &str| -> Result<Source> {
        if let Some(k) = name.strip_prefix('%') {
            let k: usize = k.parse().map_err(|_| Error::Parse(format!("bad instruction reference {name}")))?;
            return Ok(Source::Inst(k));
        }
        doc.ct_inputs
            .iter()
            .position(|n| n == name)
            .map(Source::Input)
            .ok_or_else(|| Error::Parse(format!("unknown source {name}")))
    };
    let operand = |o: &OperandDoc| -> Result<Operand> { Ok(Operand::new(resolve(&o.src)?, params.normalize_rot(o.rot))) };
    let pt_consts = doc
        .pt_consts
        .iter()
        .map(|pt| NamedPt {
            name: pt.name.clone(),
            value: PtValue { slots: pt.slots.iter().map(|&s| params.reduce(s)).collect() },
        })
        .collect::<Vec<_>>();
    let mut body = Vec::with_capacity(doc.body.len());
    for (i, instr) in doc.body.iter().enumerate() {
        let op = Opcode::from_mnemonic(&instr.op)
            .ok_or_else(|| Error::Parse(format!("instruction {i}: unknown opcode {}", instr.op)))?;
        let rhs = match &instr.rhs {
            Some(RhsDoc::Ct(o)) => Rhs::Ct(operand(o)?),
            Some(RhsDoc::Pt(name)) => Rhs::Pt(
                pt_consts
                    .iter()
                    .position(|p| &p.name == name)
                    .ok_or_else(|| Error::Parse(format!("instruction {i}: unknown plaintext {name}")))?,
            ),
            None => Rhs::None,
        };
        body.push(Instruction { op, lhs: operand(&instr.lhs)?, rhs });
    }
    let p = Program { params, ct_inputs: doc.ct_inputs.clone(), pt_consts, body, result: resolve(&doc.result)? };
    p.validate().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gx_solution() -> Program {
        let params = RingParams::new(32, 65537).unwrap();
        let mut p = Program::identity(params, vec!["c0".into()]);
        let c0 = Source::Input(0);
        let c1 = p.push(Instruction::ct_ct(
            Opcode::AddCtCt,
            Operand::new(c0, params.normalize_rot(-5)),
            Operand::new(c0, 0),
        ));
        let c2 = p.push(Instruction::ct_ct(Opcode::AddCtCt, Operand::new(c1, 5), Operand::new(c1, 0)));
        p.push(Instruction::ct_ct(
            Opcode::SubCtCt,
            Operand::new(c2, 1),
            Operand::new(c2, params.normalize_rot(-1)),
        ));
        p
    }

    #[test]
    fn round_trip() {
        let p = gx_solution();
        let text = to_json(&p).unwrap();
        assert_eq!(from_json(&text).unwrap(), p);
    }

    #[test]
    fn negative_rotation_normalized() {
        let text = r#"{"params":{"n":8,"t":17},"ct_inputs":["x"],
            "body":[{"op":"add-ct-ct","lhs":{"src":"x","rot":-1},"rhs":{"ct":{"src":"x"}}}],
            "result":"%0"}"#;
        let p = from_json(text).unwrap();
        assert_eq!(p.body[0].lhs.rot, 7);
    }

    #[test]
    fn plaintext_and_unary_round_trip() {
        let params = RingParams::new(4, 17).unwrap();
        let mut p = Program::identity(params, vec!["x".into()]);
        p.pt_consts.push(NamedPt { name: "k".into(), value: PtValue { slots: vec![1, 2, 3, 16] } });
        let a = p.push(Instruction::ct_pt(Opcode::MulCtPt, Operand::input(0), 0));
        let b = p.push(Instruction::rotate(a, 3));
        p.push(Instruction::relinearize(b));
        assert_eq!(from_json(&to_json(&p).unwrap()).unwrap(), p);
    }

    #[test]
    fn rejects_malformed() {
        assert!(from_json("{").is_err());
        let unknown_op = r#"{"params":{"n":8,"t":17},"ct_inputs":["x"],
            "body":[{"op":"div","lhs":{"src":"x"}}],"result":"%0"}"#;
        assert!(from_json(unknown_op).is_err());
        let forward = r#"{"params":{"n":8,"t":17},"ct_inputs":["x"],
            "body":[{"op":"add-ct-ct","lhs":{"src":"%1"},"rhs":{"ct":{"src":"x"}}}],"result":"%0"}"#;
        assert!(from_json(forward).is_err());
    }
}
