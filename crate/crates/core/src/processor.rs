//! Input processors: pre/post hooks that split off the part of an input that
//! must never be transformed and reattach it afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::state::InputState;

/// Opaque data a processor carries from `pre` to `post`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProcessorContext(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pre,
    Post,
}

pub trait InputProcessor: Send + Sync {
    /// Splits a raw state into the transformable core and untouched context.
    fn pre(&self, raw: &InputState) -> Result<(InputState, ProcessorContext)>;

    /// Reattaches the context. `post(pre(x))` must reproduce `x` exactly.
    fn post(&self, core: &InputState, context: &ProcessorContext) -> Result<InputState>;
}

/// Protects the top-level domain of a domain name (`lfjx.com` -> `lfjx` + `.com`).
#[derive(Debug, Clone, Copy, Default)]
pub struct TldSplit;

impl InputProcessor for TldSplit {
    fn pre(&self, raw: &InputState) -> Result<(InputState, ProcessorContext)> {
        let text = raw
            .as_text()
            .ok_or_else(|| Error::MalformedInput(format!("tld_split expects text, got {}", raw.kind())))?;
        match text.rfind('.') {
            Some(0) | None => Err(Error::MalformedInput(format!("`{text}` has no domain label before a TLD"))),
            Some(dot) => Ok((
                InputState::Text(text[..dot].to_string()),
                ProcessorContext(text[dot..].to_string()),
            )),
        }
    }

    fn post(&self, core: &InputState, context: &ProcessorContext) -> Result<InputState> {
        let text = core
            .as_text()
            .ok_or_else(|| Error::MalformedInput(format!("tld_split expects text, got {}", core.kind())))?;
        Ok(InputState::Text(format!("{text}{}", context.0)))
    }
}

/// Runs the named processor in the given phase. For `Phase::Post` the caller
/// passes the context returned by the matching `Phase::Pre` call.
pub fn run_input_processor(
    registry: &Registry,
    name: &str,
    state: &InputState,
    phase: Phase,
    context: Option<&ProcessorContext>,
) -> Result<(InputState, ProcessorContext)> {
    let processor = registry.processor(name)?;
    match phase {
        Phase::Pre => processor.pre(state),
        Phase::Post => {
            let ctx = context.cloned().unwrap_or_default();
            let out = processor.post(state, &ctx)?;
            Ok((out, ctx))
        }
    }
}
