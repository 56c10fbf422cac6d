//! A two-class logistic model behind the external-process protocol, for
//! trying external configs without a real model server.
//!
//! `evgraph-mock-model [--weights 1,-0.5,...] [--bias 0] [--op predict]`
//!
//! The predict op returns `[1 - p, p]` with `p = sigmoid(bias + w . x)`;
//! missing weights default to 1. The `extract` op maps each value of a
//! state row to a number: numbers as-is, booleans to 0/1, strings to their
//! length.

use std::io::{BufRead, Write};

use clap::Parser;
use evgraph_core::model::external::{Request, Response};
use serde_json::Value;

#[derive(Parser)]
struct Args {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    bias: f64,
    /// Name of the prediction op.
    #[arg(long, default_value = "predict")]
    op: String,
}

fn number(v: &Value) -> Result<f64, String> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| format!("{n} is not representable")),
        Value::Bool(b) => Ok(f64::from(u8::from(*b))),
        Value::String(s) => Ok(s.chars().count() as f64),
        other => Err(format!("cannot convert {other} to a number")),
    }
}

fn handle(args: &Args, req: &Request) -> Result<Vec<Vec<f64>>, String> {
    let rows = req
        .data
        .iter()
        .map(|row| row.iter().map(number).collect::<Result<Vec<_>, _>>());
    if req.op == args.op {
        rows.map(|x| {
            let x = x?;
            let z = args.bias
                + x.iter()
                    .enumerate()
                    .map(|(i, v)| args.weights.get(i).copied().unwrap_or(1.0) * v)
                    .sum::<f64>();
            let p = 1.0 / (1.0 + (-z).exp());
            Ok(vec![1.0 - p, p])
        })
        .collect()
    } else if req.op == "extract" {
        rows.collect()
    } else {
        Err(format!("unknown op `{}`", req.op))
    }
}

fn main() {
    let args = Args::parse();
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(req) => match handle(&args, &req) {
                Ok(result) => Response {
                    id: req.id,
                    result: Some(result),
                    error: None,
                },
                Err(e) => Response {
                    id: req.id,
                    result: None,
                    error: Some(e),
                },
            },
            Err(e) => Response {
                id: 0,
                result: None,
                error: Some(format!("malformed request: {e}")),
            },
        };
        let text = serde_json::to_string(&resp).expect("responses serialize");
        if writeln!(stdout, "{text}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
    }
}
