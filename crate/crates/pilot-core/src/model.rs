//! The model document: one JSON file fully determines a verification run.
//! Parsing validates every cross-reference up front, so later stages never
//! meet an undeclared name or an unregistered symbol.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::checker::InvariantSpec;
use crate::ontology::{DeviceId, ItemId, Ontology, OntologyDecl, PurposeId, Role, Value};
use crate::pg::{CompositionMode, PgAction, PgTransition, ProgramGraph};
use crate::policy::{
    AbstractOrder, CondVal, Condition, DataCommunicationRule, DataUsageRule, Interpretation,
    PilotPolicy, PolicyId, PolicyPool, Term,
};
use crate::semantics::{ModelConfig, PolicyMode, SystemState};
use crate::systems::{Mutation, SystemSpec};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model document is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("section '{section}': {message}")]
    Section { section: String, message: String },
}

fn err(section: &str, message: impl Into<String>) -> ModelError {
    ModelError::Section { section: section.to_string(), message: message.into() }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrderDoc {
    #[serde(default)]
    elements: Vec<String>,
    #[serde(default)]
    leq: Vec<(String, String)>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyDoc {
    #[serde(default)]
    entities: OrderDoc,
    #[serde(default)]
    datatypes: OrderDoc,
    #[serde(default)]
    purposes: OrderDoc,
    #[serde(default)]
    values: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceDoc {
    entity: String,
    role: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemDoc {
    datatype: String,
    owner: String,
    #[serde(default)]
    values: Vec<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    #[serde(default)]
    condition: Option<serde_json::Value>,
    entity: String,
    #[serde(default)]
    purposes: Vec<String>,
    retention: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    datatype: String,
    rule: RuleDoc,
    #[serde(default)]
    transfers: Vec<RuleDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFnDoc {
    arity: usize,
    #[serde(default)]
    table: Vec<serde_json::Value>,
    default: serde_json::Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TablePredDoc {
    #[serde(default)]
    table: Vec<serde_json::Value>,
    #[serde(default)]
    default: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterpDoc {
    #[serde(default)]
    functions: BTreeMap<String, TableFnDoc>,
    #[serde(default)]
    predicates: BTreeMap<String, TablePredDoc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrderSectionDoc {
    #[serde(default)]
    leq: Vec<(String, String)>,
    #[serde(default)]
    transfer_targets: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    #[serde(default)]
    always_active: bool,
    #[serde(default = "default_mode")]
    policy_mode: String,
    #[serde(default)]
    bound: Option<usize>,
}

fn default_mode() -> String {
    "structural".into()
}

impl Default for ConfigDoc {
    fn default() -> Self {
        ConfigDoc { always_active: false, policy_mode: default_mode(), bound: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemDoc {
    kind: String,
    subject: String,
    controllers: Vec<String>,
    #[serde(default)]
    repository: Option<String>,
    item: String,
    #[serde(default = "default_composition")]
    composition: String,
    #[serde(default)]
    dc_transfers: bool,
    #[serde(default = "default_mutation")]
    mutation: String,
}

fn default_composition() -> String {
    "async".into()
}

fn default_mutation() -> String {
    "none".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PgVarDoc {
    #[serde(default)]
    init: Vec<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PgTransitionDoc {
    from: String,
    to: String,
    action: serde_json::Value,
    #[serde(default)]
    guard: Option<serde_json::Value>,
    #[serde(default)]
    assigns: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    clears: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PgDoc {
    locations: Vec<String>,
    initial: String,
    #[serde(default)]
    variables: BTreeMap<String, PgVarDoc>,
    transitions: Vec<PgTransitionDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocRoot {
    ontology: OntologyDoc,
    #[serde(default)]
    devices: BTreeMap<String, DeviceDoc>,
    #[serde(default)]
    items: BTreeMap<String, ItemDoc>,
    #[serde(default)]
    interpretation: InterpDoc,
    #[serde(default)]
    policies: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    policy_order: Option<OrderSectionDoc>,
    #[serde(default)]
    initial_policies: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    config: ConfigDoc,
    #[serde(default)]
    system: Option<SystemDoc>,
    #[serde(default)]
    program_graphs: BTreeMap<String, PgDoc>,
    #[serde(default)]
    invariants: BTreeMap<String, serde_json::Value>,
}

/// A parsed and cross-validated model document.
#[derive(Debug)]
pub struct ModelDocument {
    doc: DocRoot,
}

/// Everything lowered from a document: the semantic configuration, the
/// optional built-system selection, custom program graphs, named custom
/// invariants, and the exploration bound.
#[derive(Debug)]
pub struct LoadedModel {
    pub cfg: Arc<ModelConfig>,
    pub system: Option<SystemSpec>,
    pub custom_pgs: Vec<ProgramGraph>,
    pub invariants: BTreeMap<String, InvariantSpec<SystemState>>,
    pub bound: Option<usize>,
}

impl ModelDocument {
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let doc: DocRoot = serde_json::from_str(text)?;
        Ok(ModelDocument { doc })
    }

    /// Lowers the document with its declared policy mode.
    pub fn load(&self) -> Result<LoadedModel, ModelError> {
        self.load_with_mode(None)
    }

    /// Lowers the document, optionally overriding the declared policy mode
    /// (used to compare structural and abstract runs of the same model).
    pub fn load_with_mode(&self, mode: Option<PolicyMode>) -> Result<LoadedModel, ModelError> {
        let doc = &self.doc;
        let ontology = Arc::new(self.build_ontology()?);
        let interp = Arc::new(self.build_interpretation(&ontology)?);
        let pool = self.build_policies(&ontology, &interp)?;

        let mut initial_policies: BTreeMap<DeviceId, Vec<PolicyId>> = BTreeMap::new();
        for (device, names) in &doc.initial_policies {
            let d = ontology
                .device_id(device)
                .map_err(|_| err("initial_policies", format!("unknown device '{device}'")))?;
            let mut ids = Vec::new();
            for n in names {
                ids.push(
                    pool.id(n)
                        .map_err(|_| err("initial_policies", format!("unknown policy '{n}'")))?,
                );
            }
            initial_policies.insert(d, ids);
        }

        let mut initial_values: BTreeMap<ItemId, Vec<Value>> = BTreeMap::new();
        for (item, decl) in &doc.items {
            let id = ontology.item_id(item).expect("validated in build_ontology");
            let mut vals = Vec::new();
            for v in &decl.values {
                vals.push(parse_value(&ontology, v).map_err(|m| err("items", m))?);
            }
            if !vals.is_empty() {
                initial_values.insert(id, vals);
            }
        }

        let policy_mode = mode.unwrap_or(match doc.config.policy_mode.as_str() {
            "structural" => PolicyMode::Structural,
            "abstract" => PolicyMode::Abstract,
            other => {
                return Err(err("config", format!("unknown policy_mode '{other}'")));
            }
        });
        let order = match &doc.policy_order {
            None => None,
            Some(section) => Some(self.build_order(section, &pool)?),
        };

        let cfg = ModelConfig::new(
            ontology.clone(),
            interp,
            pool,
            initial_policies,
            initial_values,
            doc.config.always_active,
            policy_mode,
            order,
        )
        .map_err(|e| err("config", e.to_string()))?;
        let cfg = Arc::new(cfg);

        if doc.system.is_some() && !doc.program_graphs.is_empty() {
            return Err(err(
                "system",
                "declare either a built system or custom program_graphs, not both",
            ));
        }

        let system = match &doc.system {
            None => None,
            Some(sys) => Some(self.build_system(sys, &cfg)?),
        };
        let custom_pgs = self.build_custom_pgs(&cfg)?;
        let invariants = self.build_invariants(&cfg)?;

        Ok(LoadedModel { cfg, system, custom_pgs, invariants, bound: doc.config.bound })
    }

    fn build_ontology(&self) -> Result<Ontology, ModelError> {
        let doc = &self.doc;
        let mut decl = OntologyDecl {
            entities: doc.ontology.entities.elements.clone(),
            entity_edges: doc.ontology.entities.leq.clone(),
            datatypes: doc.ontology.datatypes.elements.clone(),
            datatype_edges: doc.ontology.datatypes.leq.clone(),
            purposes: doc.ontology.purposes.elements.clone(),
            purpose_edges: doc.ontology.purposes.leq.clone(),
            constants: doc.ontology.values.clone(),
            devices: Vec::new(),
            items: Vec::new(),
        };
        for (name, d) in &doc.devices {
            let role = match d.role.as_str() {
                "ds" => Role::Subject,
                "dc" => Role::Controller,
                "repository" => Role::Repository,
                other => {
                    return Err(err("devices", format!("device '{name}': unknown role '{other}'")))
                }
            };
            decl.devices.push((name.clone(), d.entity.clone(), role));
        }
        for (name, item) in &doc.items {
            decl.items.push((name.clone(), item.datatype.clone(), item.owner.clone()));
        }
        Ontology::new(decl).map_err(|e| err("ontology", e.to_string()))
    }

    fn build_interpretation(&self, ontology: &Ontology) -> Result<Interpretation, ModelError> {
        let mut interp = Interpretation::new();
        for (name, def) in &self.doc.interpretation.functions {
            let mut map = BTreeMap::new();
            for row in &def.table {
                let (args, result) = parse_table_row(ontology, row, def.arity)
                    .map_err(|m| err("interpretation", format!("function '{name}': {m}")))?;
                map.insert(args, result);
            }
            let default = parse_cond_val(ontology, &def.default)
                .map_err(|m| err("interpretation", format!("function '{name}': {m}")))?;
            interp
                .register_fn_table(name, def.arity, map, default)
                .map_err(|e| err("interpretation", e.to_string()))?;
        }
        for (name, def) in &self.doc.interpretation.predicates {
            let mut map = BTreeMap::new();
            for row in &def.table {
                let (args, result) = parse_pred_row(ontology, row)
                    .map_err(|m| err("interpretation", format!("predicate '{name}': {m}")))?;
                map.insert(args, result);
            }
            interp
                .register_pred_table(name, map, def.default)
                .map_err(|e| err("interpretation", e.to_string()))?;
        }
        Ok(interp)
    }

    fn build_rule(
        &self,
        ontology: &Ontology,
        interp: &Interpretation,
        rule: &RuleDoc,
        context: &str,
    ) -> Result<DataCommunicationRule, ModelError> {
        let entity = crate::ontology::EntityId(
            ontology
                .entities
                .id(&rule.entity)
                .map_err(|_| err("policies", format!("{context}: unknown entity '{}'", rule.entity)))?,
        );
        let mut purposes = std::collections::BTreeSet::new();
        for p in &rule.purposes {
            purposes.insert(PurposeId(ontology.purposes.id(p).map_err(|_| {
                err("policies", format!("{context}: unknown purpose '{p}'"))
            })?));
        }
        let condition = match &rule.condition {
            None => Condition::True,
            Some(c) => parse_condition(ontology, interp, c, &mut |name| {
                ontology.item_id(name).map(|i| i).map_err(|_| format!("unknown item '{name}'"))
            })
            .map_err(|m| err("policies", format!("{context}: {m}")))?,
        };
        Ok(DataCommunicationRule {
            condition,
            entity,
            dur: DataUsageRule { purposes, retention: rule.retention },
        })
    }

    fn build_policies(
        &self,
        ontology: &Arc<Ontology>,
        interp: &Interpretation,
    ) -> Result<PolicyPool, ModelError> {
        let mut pool = PolicyPool::new(ontology.clone());
        for (name, raw) in &self.doc.policies {
            if raw.as_str() == Some("bottom") {
                pool.insert(name, PilotPolicy::Bottom)
                    .map_err(|e| err("policies", e.to_string()))?;
                continue;
            }
            let doc: PolicyDoc = serde_json::from_value(raw.clone())
                .map_err(|e| err("policies", format!("policy '{name}': {e}")))?;
            let datatype = crate::ontology::TypeId(ontology.datatypes.id(&doc.datatype).map_err(
                |_| err("policies", format!("policy '{name}': unknown datatype '{}'", doc.datatype)),
            )?);
            let dcr = self.build_rule(ontology, interp, &doc.rule, &format!("policy '{name}'"))?;
            let mut transfers = Vec::new();
            for (i, tr) in doc.transfers.iter().enumerate() {
                transfers.push(self.build_rule(
                    ontology,
                    interp,
                    tr,
                    &format!("policy '{name}' transfer {i}"),
                )?);
            }
            pool.insert(name, PilotPolicy::new(datatype, dcr, transfers))
                .map_err(|e| err("policies", e.to_string()))?;
        }
        Ok(pool)
    }

    fn build_order(
        &self,
        section: &OrderSectionDoc,
        pool: &PolicyPool,
    ) -> Result<AbstractOrder, ModelError> {
        let mut pairs = Vec::new();
        for (a, b) in &section.leq {
            let pa = pool.id(a).map_err(|_| err("policy_order", format!("unknown policy '{a}'")))?;
            let pb = pool.id(b).map_err(|_| err("policy_order", format!("unknown policy '{b}'")))?;
            pairs.push((pa, pb));
        }
        let mut targets = vec![Vec::new(); pool.len()];
        for (p, list) in &section.transfer_targets {
            let id = pool
                .id(p)
                .map_err(|_| err("policy_order", format!("unknown policy '{p}'")))?;
            let mut ids = Vec::new();
            for t in list {
                ids.push(
                    pool.id(t)
                        .map_err(|_| err("policy_order", format!("unknown policy '{t}'")))?,
                );
            }
            targets[id.0 as usize] = ids;
        }
        Ok(AbstractOrder::new(pool.len(), &pairs, targets))
    }

    fn build_system(&self, sys: &SystemDoc, cfg: &Arc<ModelConfig>) -> Result<SystemSpec, ModelError> {
        let ont = &cfg.ontology;
        let subject = ont
            .device_id(&sys.subject)
            .map_err(|_| err("system", format!("unknown device '{}'", sys.subject)))?;
        let mut controllers = Vec::new();
        for c in &sys.controllers {
            controllers.push(
                ont.device_id(c).map_err(|_| err("system", format!("unknown device '{c}'")))?,
            );
        }
        let repository = match &sys.repository {
            None => None,
            Some(r) => Some(
                ont.device_id(r).map_err(|_| err("system", format!("unknown device '{r}'")))?,
            ),
        };
        let item = ont
            .item_id(&sys.item)
            .map_err(|_| err("system", format!("unknown item '{}'", sys.item)))?;
        let mode = match sys.composition.as_str() {
            "async" => CompositionMode::Async,
            "sync" => CompositionMode::Sync,
            other => return Err(err("system", format!("unknown composition '{other}'"))),
        };
        let mutation = match sys.mutation.as_str() {
            "none" => Mutation::None,
            "drop_send_guard" => Mutation::DropSendGuard,
            "drop_accept_guard" => Mutation::DropAcceptGuard,
            other => return Err(err("system", format!("unknown mutation '{other}'"))),
        };
        match sys.kind.as_str() {
            "direct" | "indirect" => {}
            other => return Err(err("system", format!("unknown kind '{other}'"))),
        }
        if sys.kind == "indirect" && repository.is_none() {
            return Err(err("system", "indirect systems need a repository device"));
        }
        Ok(SystemSpec {
            subject,
            controllers,
            repository,
            item,
            mode,
            dc_transfers: sys.dc_transfers,
            mutation,
        })
    }

    pub fn system_kind(&self) -> Option<&str> {
        self.doc.system.as_ref().map(|s| s.kind.as_str())
    }

    fn build_custom_pgs(&self, cfg: &Arc<ModelConfig>) -> Result<Vec<ProgramGraph>, ModelError> {
        let mut out = Vec::new();
        for (name, pg) in &self.doc.program_graphs {
            let section = format!("program_graphs/{name}");
            let loc_index: BTreeMap<&str, u32> = pg
                .locations
                .iter()
                .enumerate()
                .map(|(i, l)| (l.as_str(), i as u32))
                .collect();
            let loc = |l: &str| -> Result<u32, ModelError> {
                loc_index
                    .get(l)
                    .copied()
                    .ok_or_else(|| err(&section, format!("unknown location '{l}'")))
            };
            let var_names: Vec<String> = pg.variables.keys().cloned().collect();
            let var_index: BTreeMap<&str, u32> = var_names
                .iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), i as u32))
                .collect();
            let var = |v: &str| -> Result<u32, String> {
                var_index.get(v).copied().ok_or_else(|| format!("unknown variable '{v}'"))
            };

            let mut transitions = Vec::new();
            for (i, tr) in pg.transitions.iter().enumerate() {
                let ctx = format!("transition {i}");
                let action = parse_pg_action(cfg, &tr.action, &var)
                    .map_err(|m| err(&section, format!("{ctx}: {m}")))?;
                let guard = match &tr.guard {
                    None => Condition::True,
                    Some(c) => parse_condition(&cfg.ontology, &cfg.interp, c, &mut |n| {
                        var(n)
                    })
                    .map_err(|m| err(&section, format!("{ctx}: {m}")))?,
                };
                let mut assigns = Vec::new();
                for (target, term) in &tr.assigns {
                    let t = parse_term(&cfg.ontology, &cfg.interp, term, &mut |n| var(n))
                        .map_err(|m| err(&section, format!("{ctx}: {m}")))?;
                    assigns.push((
                        var(target).map_err(|m| err(&section, format!("{ctx}: {m}")))?,
                        t,
                    ));
                }
                let mut clears = Vec::new();
                for c in &tr.clears {
                    clears.push(var(c).map_err(|m| err(&section, format!("{ctx}: {m}")))?);
                }
                transitions.push(PgTransition {
                    from: loc(&tr.from)?,
                    to: loc(&tr.to)?,
                    action,
                    guard,
                    assigns,
                    clears,
                });
            }

            let mut pools: Vec<Vec<CondVal>> = Vec::new();
            for v in &var_names {
                let decl = &pg.variables[v];
                let mut vals = Vec::new();
                for raw in &decl.init {
                    vals.push(
                        parse_cond_val_rich(cfg, raw)
                            .map_err(|m| err(&section, format!("variable '{v}': {m}")))?,
                    );
                }
                pools.push(vals);
            }
            let mut rows = vec![Vec::new()];
            for options in &pools {
                let mut next = Vec::new();
                for row in &rows {
                    if options.is_empty() {
                        let mut r: Vec<CondVal> = row.clone();
                        r.push(CondVal::Undefined);
                        next.push(r);
                    } else {
                        for v in options {
                            let mut r = row.clone();
                            r.push(*v);
                            next.push(r);
                        }
                    }
                }
                rows = next;
            }

            out.push(ProgramGraph {
                name: name.clone(),
                locations: pg.locations.clone(),
                initial_location: loc(&pg.initial)?,
                variables: var_names,
                initial_valuations: rows,
                transitions,
            });
        }
        Ok(out)
    }

    fn build_invariants(
        &self,
        cfg: &Arc<ModelConfig>,
    ) -> Result<BTreeMap<String, InvariantSpec<SystemState>>, ModelError> {
        let mut out = BTreeMap::new();
        for (name, raw) in &self.doc.invariants {
            let pred = parse_invariant(cfg, raw)
                .map_err(|m| err("invariants", format!("invariant '{name}': {m}")))?;
            out.insert(name.clone(), InvariantSpec::new(name, move |st: &SystemState| pred.eval(st)));
        }
        Ok(out)
    }
}

fn parse_value(ontology: &Ontology, raw: &serde_json::Value) -> Result<Value, String> {
    match raw {
        serde_json::Value::Null => Ok(Value::Undefined),
        serde_json::Value::Number(n) => n
            .as_u64()
            .map(Value::Nat)
            .ok_or_else(|| format!("value {n} is not a natural number")),
        serde_json::Value::String(s) => ontology
            .constant_id(s)
            .map(Value::Sym)
            .map_err(|_| format!("undeclared constant '{s}' (declare it under ontology.values)")),
        other => Err(format!("unsupported value {other}")),
    }
}

fn parse_cond_val(ontology: &Ontology, raw: &serde_json::Value) -> Result<CondVal, String> {
    parse_value(ontology, raw).map(CondVal::from)
}

/// Values in program-graph contexts may also name devices, policies and
/// datatypes via tagged objects.
fn parse_cond_val_rich(cfg: &ModelConfig, raw: &serde_json::Value) -> Result<CondVal, String> {
    if let serde_json::Value::Object(map) = raw {
        if map.len() == 1 {
            let (k, v) = map.iter().next().unwrap();
            let text = || {
                v.as_str().ok_or_else(|| format!("'{k}' wants a string, got {v}"))
            };
            match k.as_str() {
                "device" => {
                    return cfg
                        .ontology
                        .device_id(text()?)
                        .map(CondVal::Dev)
                        .map_err(|e| e.to_string())
                }
                "policy" => return cfg.pool.id(text()?).map(CondVal::Policy).map_err(|e| e.to_string()),
                "type" => {
                    return cfg
                        .ontology
                        .datatypes
                        .id(text()?)
                        .map(|t| CondVal::Type(crate::ontology::TypeId(t)))
                        .map_err(|e| e.to_string())
                }
                "sym" => {
                    return cfg
                        .ontology
                        .constant_id(text()?)
                        .map(CondVal::Sym)
                        .map_err(|e| e.to_string())
                }
                "nat" => {
                    return v
                        .as_u64()
                        .map(CondVal::Nat)
                        .ok_or_else(|| format!("'nat' wants a natural number, got {v}"))
                }
                _ => {}
            }
        }
    }
    parse_cond_val(&cfg.ontology, raw)
}

fn parse_table_row(
    ontology: &Ontology,
    row: &serde_json::Value,
    arity: usize,
) -> Result<(Vec<CondVal>, CondVal), String> {
    let pair = row.as_array().ok_or("table rows are [[args...], result] pairs")?;
    if pair.len() != 2 {
        return Err("table rows are [[args...], result] pairs".into());
    }
    let args_raw = pair[0].as_array().ok_or("table rows are [[args...], result] pairs")?;
    if args_raw.len() != arity {
        return Err(format!("row has {} arguments, declared arity {arity}", args_raw.len()));
    }
    let mut args = Vec::new();
    for a in args_raw {
        args.push(parse_cond_val(ontology, a)?);
    }
    Ok((args, parse_cond_val(ontology, &pair[1])?))
}

fn parse_pred_row(
    ontology: &Ontology,
    row: &serde_json::Value,
) -> Result<(Vec<CondVal>, bool), String> {
    let pair = row.as_array().ok_or("table rows are [[a, b], bool] pairs")?;
    if pair.len() != 2 {
        return Err("table rows are [[a, b], bool] pairs".into());
    }
    let args_raw = pair[0].as_array().ok_or("table rows are [[a, b], bool] pairs")?;
    if args_raw.len() != 2 {
        return Err("predicates are binary".into());
    }
    let mut args = Vec::new();
    for a in args_raw {
        args.push(parse_cond_val(ontology, a)?);
    }
    let result = pair[1].as_bool().ok_or("predicate results are booleans")?;
    Ok((args, result))
}

/// Parses a term. `resolve` maps reference names (items in policy
/// conditions, variables in guards) to the reference type.
fn parse_term<R>(
    ontology: &Ontology,
    interp: &Interpretation,
    raw: &serde_json::Value,
    resolve: &mut impl FnMut(&str) -> Result<R, String>,
) -> Result<Term<R>, String> {
    match raw {
        serde_json::Value::Number(n) => {
            n.as_u64().map(Term::Nat).ok_or_else(|| format!("{n} is not a natural number"))
        }
        serde_json::Value::Object(map) if map.len() == 1 => {
            let (k, v) = map.iter().next().unwrap();
            let text = || v.as_str().ok_or_else(|| format!("'{k}' wants a string, got {v}"));
            match k.as_str() {
                "item" | "var" => resolve(text()?).map(Term::Ref),
                "nat" => v
                    .as_u64()
                    .map(Term::Nat)
                    .ok_or_else(|| format!("'nat' wants a natural number, got {v}")),
                "sym" => ontology
                    .constant_id(text()?)
                    .map(Term::Sym)
                    .map_err(|e| e.to_string()),
                "device" => ontology.device_id(text()?).map(Term::Dev).map_err(|e| e.to_string()),
                "type" => ontology
                    .datatypes
                    .id(text()?)
                    .map(|t| Term::Type(crate::ontology::TypeId(t)))
                    .map_err(|e| e.to_string()),
                "fn" => {
                    let parts = v.as_array().ok_or("'fn' wants [name, args...]")?;
                    let name = parts
                        .first()
                        .and_then(|n| n.as_str())
                        .ok_or("'fn' wants [name, args...]")?;
                    let f = interp.fn_id(name).map_err(|e| e.to_string())?;
                    let want = interp.fn_arity(f);
                    if parts.len() - 1 != want {
                        return Err(format!(
                            "function '{name}' wants {want} arguments, got {}",
                            parts.len() - 1
                        ));
                    }
                    let mut args = Vec::new();
                    for a in &parts[1..] {
                        args.push(parse_term(ontology, interp, a, resolve)?);
                    }
                    Ok(Term::Apply(f, args))
                }
                other => Err(format!("unknown term form '{other}'")),
            }
        }
        other => Err(format!("unsupported term {other}")),
    }
}

fn parse_condition<R>(
    ontology: &Ontology,
    interp: &Interpretation,
    raw: &serde_json::Value,
    resolve: &mut impl FnMut(&str) -> Result<R, String>,
) -> Result<Condition<R>, String> {
    match raw {
        serde_json::Value::Bool(true) => Ok(Condition::True),
        serde_json::Value::Bool(false) => Ok(Condition::False),
        serde_json::Value::Object(map) if map.len() == 1 => {
            let (k, v) = map.iter().next().unwrap();
            match k.as_str() {
                "not" => Ok(Condition::not(parse_condition(ontology, interp, v, resolve)?)),
                "and" => {
                    let parts = v.as_array().ok_or("'and' wants a list of conditions")?;
                    if parts.is_empty() {
                        return Ok(Condition::True);
                    }
                    let mut conds = Vec::new();
                    for p in parts {
                        conds.push(parse_condition(ontology, interp, p, resolve)?);
                    }
                    let mut out = conds.pop().unwrap();
                    while let Some(c) = conds.pop() {
                        out = Condition::and(c, out);
                    }
                    Ok(out)
                }
                "pred" => {
                    let parts = v.as_array().ok_or("'pred' wants [op, lhs, rhs]")?;
                    if parts.len() != 3 {
                        return Err("'pred' wants [op, lhs, rhs]".into());
                    }
                    let op = parts[0].as_str().ok_or("'pred' wants an operator name")?;
                    let p = interp.pred_id(op).map_err(|e| e.to_string())?;
                    let lhs = parse_term(ontology, interp, &parts[1], resolve)?;
                    let rhs = parse_term(ontology, interp, &parts[2], resolve)?;
                    Ok(Condition::Pred(p, lhs, rhs))
                }
                other => Err(format!("unknown condition form '{other}'")),
            }
        }
        other => Err(format!("unsupported condition {other}")),
    }
}

fn parse_pg_action(
    cfg: &ModelConfig,
    raw: &serde_json::Value,
    var: &impl Fn(&str) -> Result<u32, String>,
) -> Result<PgAction, String> {
    let map = raw.as_object().ok_or("action wants an object")?;
    if map.len() != 1 {
        return Err("action wants exactly one of internal/send/recv".into());
    }
    let (k, v) = map.iter().next().unwrap();
    match k.as_str() {
        "internal" => Ok(PgAction::Internal(
            v.as_str().ok_or("'internal' wants an action name")?.to_string(),
        )),
        "send" => {
            let parts = v.as_array().ok_or("'send' wants [action, terms...]")?;
            let name = parts
                .first()
                .and_then(|n| n.as_str())
                .ok_or("'send' wants [action, terms...]")?;
            let mut terms = Vec::new();
            for t in &parts[1..] {
                let mut resolve = |n: &str| var(n);
                terms.push(parse_term(&cfg.ontology, &cfg.interp, t, &mut resolve)?);
            }
            Ok(PgAction::Send(name.to_string(), terms))
        }
        "recv" => {
            let parts = v.as_array().ok_or("'recv' wants [action, vars...]")?;
            let name = parts
                .first()
                .and_then(|n| n.as_str())
                .ok_or("'recv' wants [action, vars...]")?;
            let mut params = Vec::new();
            for p in &parts[1..] {
                let n = p.as_str().ok_or("'recv' parameters are variable names")?;
                params.push(var(n)?);
            }
            Ok(PgAction::Recv(name.to_string(), params))
        }
        other => Err(format!("unknown action form '{other}'")),
    }
}

/// Custom invariant predicates over abstract states.
enum InvPred {
    True,
    False,
    Not(Box<InvPred>),
    And(Vec<InvPred>),
    Or(Vec<InvPred>),
    InBase { device: DeviceId, from: Option<DeviceId>, policy: Option<PolicyId> },
    InReceived {
        device: DeviceId,
        from: Option<DeviceId>,
        item: Option<ItemId>,
        policy: Option<PolicyId>,
    },
    Defined { device: DeviceId, item: ItemId },
}

impl InvPred {
    fn eval(&self, st: &SystemState) -> bool {
        match self {
            InvPred::True => true,
            InvPred::False => false,
            InvPred::Not(p) => !p.eval(st),
            InvPred::And(ps) => ps.iter().all(|p| p.eval(st)),
            InvPred::Or(ps) => ps.iter().any(|p| p.eval(st)),
            InvPred::InBase { device, from, policy } => st.base(*device).any(|(f, p)| {
                from.map(|x| x == f).unwrap_or(true) && policy.map(|x| x == p).unwrap_or(true)
            }),
            InvPred::InReceived { device, from, item, policy } => {
                st.received(*device).any(|(f, i, p)| {
                    from.map(|x| x == f).unwrap_or(true)
                        && item.map(|x| x == i).unwrap_or(true)
                        && policy.map(|x| x == p).unwrap_or(true)
                })
            }
            InvPred::Defined { device, item } => st.value(*device, *item).is_defined(),
        }
    }
}

fn parse_invariant(cfg: &Arc<ModelConfig>, raw: &serde_json::Value) -> Result<InvPred, String> {
    let field = |m: &serde_json::Map<String, serde_json::Value>, k: &str| -> Option<String> {
        m.get(k).and_then(|v| v.as_str()).map(String::from)
    };
    match raw {
        serde_json::Value::Bool(true) => Ok(InvPred::True),
        serde_json::Value::Bool(false) => Ok(InvPred::False),
        serde_json::Value::Object(map) if map.len() == 1 => {
            let (k, v) = map.iter().next().unwrap();
            match k.as_str() {
                "not" => Ok(InvPred::Not(Box::new(parse_invariant(cfg, v)?))),
                "and" | "or" => {
                    let parts = v.as_array().ok_or("'and'/'or' want lists")?;
                    let mut preds = Vec::new();
                    for p in parts {
                        preds.push(parse_invariant(cfg, p)?);
                    }
                    Ok(if k == "and" { InvPred::And(preds) } else { InvPred::Or(preds) })
                }
                "in_base" => {
                    let m = v.as_object().ok_or("'in_base' wants an object")?;
                    let device = field(m, "device").ok_or("'in_base' needs a device")?;
                    let device =
                        cfg.ontology.device_id(&device).map_err(|e| e.to_string())?;
                    let from = match field(m, "from") {
                        None => None,
                        Some(f) => Some(cfg.ontology.device_id(&f).map_err(|e| e.to_string())?),
                    };
                    let policy = match field(m, "policy") {
                        None => None,
                        Some(p) => Some(cfg.pool.id(&p).map_err(|e| e.to_string())?),
                    };
                    for key in m.keys() {
                        if !["device", "from", "policy"].contains(&key.as_str()) {
                            return Err(format!("'in_base' does not understand '{key}'"));
                        }
                    }
                    Ok(InvPred::InBase { device, from, policy })
                }
                "in_received" => {
                    let m = v.as_object().ok_or("'in_received' wants an object")?;
                    let device = field(m, "device").ok_or("'in_received' needs a device")?;
                    let device =
                        cfg.ontology.device_id(&device).map_err(|e| e.to_string())?;
                    let from = match field(m, "from") {
                        None => None,
                        Some(f) => Some(cfg.ontology.device_id(&f).map_err(|e| e.to_string())?),
                    };
                    let item = match field(m, "item") {
                        None => None,
                        Some(i) => Some(cfg.ontology.item_id(&i).map_err(|e| e.to_string())?),
                    };
                    let policy = match field(m, "policy") {
                        None => None,
                        Some(p) => Some(cfg.pool.id(&p).map_err(|e| e.to_string())?),
                    };
                    for key in m.keys() {
                        if !["device", "from", "item", "policy"].contains(&key.as_str()) {
                            return Err(format!("'in_received' does not understand '{key}'"));
                        }
                    }
                    Ok(InvPred::InReceived { device, from, item, policy })
                }
                "defined" => {
                    let m = v.as_object().ok_or("'defined' wants an object")?;
                    let device = field(m, "device").ok_or("'defined' needs a device")?;
                    let item = field(m, "item").ok_or("'defined' needs an item")?;
                    Ok(InvPred::Defined {
                        device: cfg.ontology.device_id(&device).map_err(|e| e.to_string())?,
                        item: cfg.ontology.item_id(&item).map_err(|e| e.to_string())?,
                    })
                }
                other => Err(format!("unknown invariant form '{other}'")),
            }
        }
        other => Err(format!("unsupported invariant {other}")),
    }
}
