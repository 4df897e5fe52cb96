//! Text envelopes for component configs. Decoding never runs code: the
//! behavior is looked up by `behavior_id`, and a config whose behavior is
//! unknown still decodes but is flagged dormant.

use serde::{Deserialize, Serialize};

use crate::behavior::Factories;
use crate::error::{Error, Result};
use crate::kernel::Tea;
use crate::types::{ComponentConfig, ComponentKind, Descriptor, Representations, Version};
use crate::value::{canonical_string, map_of, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecEnvelope {
    pub kind: ComponentKind,
    pub descriptor: Descriptor,
    pub version: Version,
    pub source: String,
    pub representations: Representations,
    /// Self-description of the payload: kind, behavior and argument schema.
    pub schema_dump: Value,
}

fn schema_dump(cfg: &ComponentConfig) -> Value {
    map_of([
        ("argument_schema", cfg.representations.argument_schema.clone()),
        ("behavior_id", Value::from(cfg.behavior_id())),
        ("kind", Value::from(cfg.kind.as_str())),
    ])
}

impl CodecEnvelope {
    pub fn from_config(cfg: &ComponentConfig) -> Self {
        CodecEnvelope {
            kind: cfg.kind,
            descriptor: cfg.descriptor.clone(),
            version: cfg.version,
            source: cfg.source.clone(),
            representations: cfg.representations.clone(),
            schema_dump: schema_dump(cfg),
        }
    }

    pub fn into_config(self) -> ComponentConfig {
        ComponentConfig {
            kind: self.kind,
            descriptor: self.descriptor,
            version: self.version,
            source: self.source,
            representations: self.representations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub config: ComponentConfig,
    pub dormant: bool,
}

pub fn encode(cfg: &ComponentConfig) -> Result<String> {
    canonical_string(&CodecEnvelope::from_config(cfg))
}

pub fn decode(text: &str, factories: &Factories) -> Result<Decoded> {
    let env: CodecEnvelope =
        serde_json::from_str(text).map_err(|e| Error::protocol(format!("malformed envelope: {e}")))?;
    let dump = env.schema_dump.clone();
    let config = env.into_config();
    crate::types::validate_descriptor(&config.descriptor).into_result()?;
    if dump != schema_dump(&config) {
        return Err(Error::invalid("schema_dump does not match the envelope contents"));
    }
    let dormant = match (config.kind, config.behavior_id()) {
        (ComponentKind::Prompt | ComponentKind::Memory, _) => false,
        (_, None) => true,
        (ComponentKind::Tool, Some(id)) => factories.tool(id).is_none(),
        (ComponentKind::Environment, Some(id)) => factories.environment(id).is_none(),
        (ComponentKind::Agent, Some(id)) => factories.agent(id).is_none(),
    };
    Ok(Decoded { config, dormant })
}

impl Tea {
    pub fn codec_encode(&self, kind: ComponentKind, name: &str) -> Result<String> {
        encode(&self.info(kind, name)?)
    }

    pub fn codec_decode(&self, text: &str) -> Result<Decoded> {
        decode(text, &self.factories())
    }

    /// Decodes and registers an envelope at its recorded version. Configs
    /// with unresolvable behaviors register dormant.
    pub fn codec_register(&self, text: &str) -> Result<Decoded> {
        let decoded = self.codec_decode(text)?;
        let g = self.lock_mutations();
        self.register_locked(&g, decoded.config.clone(), false)?;
        Ok(decoded)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::add_tool_spec;
    use crate::error::ErrorKind;
    use crate::value::Map;
    use proptest::prelude::*;

    #[test]
    fn round_trip_add() {
        let tea = Tea::new();
        let cfg = tea.register_tool(add_tool_spec("add")).unwrap();
        let text = tea.codec_encode(ComponentKind::Tool, "add").unwrap();
        let d = tea.codec_decode(&text).unwrap();
        assert_eq!(d.config, cfg);
        assert!(!d.dormant);
    }

    #[test]
    fn missing_factory_is_dormant() {
        let tea = Tea::new();
        tea.register_tool(add_tool_spec("add")).unwrap();
        let text = tea.codec_encode(ComponentKind::Tool, "add").unwrap();
        let bare = Tea::builder().factories(Factories::empty()).build();
        let d = bare.codec_register(&text).unwrap();
        assert!(d.dormant);
        assert!(bare.is_dormant(ComponentKind::Tool, "add").unwrap());
        let mut args = Map::new();
        args.insert("a".into(), Value::from(1i64));
        args.insert("b".into(), Value::from(2i64));
        let err = bare.invoke_tool(None, "add", &args).unwrap_err();
        assert_eq!(err.kind, ErrorKind::LifecycleViolation);
    }

    #[test]
    fn malformed_is_protocol_error() {
        let tea = Tea::new();
        assert_eq!(tea.codec_decode("{not json").unwrap_err().kind, ErrorKind::ProtocolError);
        assert_eq!(tea.codec_decode("{\"kind\":\"tool\"}").unwrap_err().kind, ErrorKind::ProtocolError);
    }

    fn arb_config() -> impl Strategy<Value = ComponentConfig> {
        (
            prop::sample::select(ComponentKind::ALL.to_vec()),
            "[a-z][a-z0-9_.-]{0,12}",
            "\\PC{1,40}",
            prop::collection::btree_map("[a-z_]{1,8}", "\\PC{0,12}", 0..4),
            any::<bool>(),
            (0u64..50, 0u64..50, 0u64..50),
            "\\PC{0,60}",
            any::<i64>(),
            -1e9f64..1e9,
        )
            .prop_map(|(kind, name, desc, meta, evolvable, (ma, mi, pa), source, n, x)| {
                let mut descriptor = Descriptor::new(name, desc).evolvable(evolvable);
                descriptor.metadata = meta;
                ComponentConfig {
                    kind,
                    descriptor,
                    version: Version { major: ma, minor: mi, patch: pa },
                    source,
                    representations: Representations {
                        call_schema: map_of([("n", Value::from(n)), ("x", Value::from(x))]),
                        text_description: "t".into(),
                        argument_schema: Value::Seq(vec![Value::Null, Value::from(x)]),
                    },
                }
            })
    }

    proptest! {
        #[test]
        fn codec_is_lossless(cfg in arb_config()) {
            prop_assume!(!cfg.descriptor.description.trim().is_empty());
            let d = decode(&encode(&cfg).unwrap(), &Factories::empty()).unwrap();
            prop_assert_eq!(d.config, cfg);
        }
    }
}
