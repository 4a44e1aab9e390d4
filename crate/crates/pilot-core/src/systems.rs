//! Builders for the two case-study architectures: direct communication
//! (request/response between subject and controllers) and indirect
//! communication (controllers publish policies to a repository, the subject
//! broadcasts data toward compliant controllers).
//!
//! Each builder returns the composed system together with the refinement
//! mapping that relates its configurations to abstract system states.

use std::sync::Arc;

use thiserror::Error;

use crate::checker::RefinementMapping;
use crate::ontology::{DeviceId, ItemId, Value};
use crate::pg::{
    compose, ComposeError, ComposedSystem, CompositionMode, CompositionState, PgAction,
    PgTransition, ProgramGraph,
};
use crate::policy::{CondVal, Condition, Term};
use crate::semantics::{ModelConfig, SystemState};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("system config: {0}")]
    Config(String),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

/// Guard deletions used by the mutation-sensitivity fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Direct case: the subject gateway sends without checking that the
    /// controller's policy subsumes its own.
    DropSendGuard,
    /// Indirect case: the controller gateway accepts any broadcast.
    DropAcceptGuard,
}

/// Selection and knobs for the case-study builders.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub subject: DeviceId,
    pub controllers: Vec<DeviceId>,
    pub repository: Option<DeviceId>,
    pub item: ItemId,
    pub mode: CompositionMode,
    /// Include the transfer-serving extension in indirect controller
    /// gateways (off by default; the verified machines omit it).
    pub dc_transfers: bool,
    pub mutation: Mutation,
}

/// A composed case-study system plus its refinement mapping.
#[derive(Debug)]
pub struct BuiltSystem {
    pub system: ComposedSystem,
    pub mapping: RefinementMapping<CompositionState>,
}

fn validate_common(cfg: &ModelConfig, spec: &SystemSpec) -> Result<(), BuildError> {
    let ont = &cfg.ontology;
    if !cfg.always_active {
        return Err(BuildError::Config(
            "the case-study gateways assume always-active policies; set config.always_active".into(),
        ));
    }
    if spec.controllers.is_empty() {
        return Err(BuildError::Config("at least one controller device is required".into()));
    }
    let mut all = vec![spec.subject];
    all.extend(&spec.controllers);
    if let Some(r) = spec.repository {
        all.push(r);
    }
    let mut dedup = all.clone();
    dedup.sort();
    dedup.dedup();
    if dedup.len() != all.len() {
        return Err(BuildError::Config("system devices must be distinct".into()));
    }
    if ont.owner_of(spec.item) != spec.subject {
        return Err(BuildError::Config("the item must be owned by the subject device".into()));
    }
    let values = cfg.initial_values.get(&spec.item).cloned().unwrap_or_default();
    if values.is_empty() || values.contains(&Value::Undefined) {
        return Err(BuildError::Config(
            "the subject's item needs a nonempty pool of defined initial values".into(),
        ));
    }
    let subject_pool = cfg.initial_policies.get(&spec.subject).cloned().unwrap_or_default();
    if subject_pool.is_empty() {
        return Err(BuildError::Config("the subject needs a nonempty policy pool".into()));
    }
    for dc in &spec.controllers {
        let pool = cfg.initial_policies.get(dc).cloned().unwrap_or_default();
        if pool.is_empty() {
            return Err(BuildError::Config("every controller needs a nonempty policy pool".into()));
        }
        if pool.iter().any(|p| cfg.pool.get(*p).is_bottom()) {
            return Err(BuildError::Config(
                "controllers must offer concrete policies, not the empty policy".into(),
            ));
        }
    }
    if let Some(repo) = spec.repository {
        if cfg.initial_policies.get(&repo).map(|p| !p.is_empty()).unwrap_or(false) {
            return Err(BuildError::Config(
                "the repository stores controller policies and must not declare its own".into(),
            ));
        }
    }
    Ok(())
}

struct Guards {
    subsumes: crate::policy::PredId,
    applies_to: crate::policy::PredId,
    eq: crate::policy::PredId,
}

fn guards(cfg: &ModelConfig) -> Guards {
    Guards {
        subsumes: cfg.interp.pred_id("subsumes").expect("built-in"),
        applies_to: cfg.interp.pred_id("applies_to").expect("built-in"),
        eq: cfg.interp.pred_id("=").expect("built-in"),
    }
}

fn policy_choices(cfg: &ModelConfig, device: DeviceId) -> Vec<CondVal> {
    cfg.initial_policies
        .get(&device)
        .map(|pool| pool.iter().map(|p| CondVal::Policy(*p)).collect())
        .unwrap_or_default()
}

fn value_choices(cfg: &ModelConfig, item: ItemId) -> Vec<CondVal> {
    cfg.initial_values
        .get(&item)
        .map(|pool| pool.iter().map(|v| CondVal::from(*v)).collect())
        .unwrap_or_default()
}

fn cross(choices: Vec<Vec<CondVal>>) -> Vec<Vec<CondVal>> {
    let mut rows = vec![Vec::new()];
    for options in choices {
        let mut next = Vec::with_capacity(rows.len() * options.len().max(1));
        if options.is_empty() {
            for row in &rows {
                let mut r = row.clone();
                r.push(CondVal::Undefined);
                next.push(r);
            }
        } else {
            for row in &rows {
                for v in &options {
                    let mut r = row.clone();
                    r.push(*v);
                    next.push(r);
                }
            }
        }
        rows = next;
    }
    rows
}

fn cond_to_value(v: CondVal) -> Result<Value, String> {
    match v {
        CondVal::Undefined => Ok(Value::Undefined),
        CondVal::Nat(n) => Ok(Value::Nat(n)),
        CondVal::Sym(s) => Ok(Value::Sym(s)),
        other => Err(format!("variable holds a non-data value {other:?}")),
    }
}

/// Variable layout captured by the refinement mappings.
struct MapVars {
    subject: DeviceId,
    item: ItemId,
    ds_policy: u32,
    ds_item: u32,
    /// Per controller: (device, entry var at the subject side, own policy
    /// var, collected policy var, collected item var, in-flight collection
    /// action). A pending collection message already counts as collected;
    /// its later delivery is the stutter.
    controllers: Vec<(DeviceId, u32, u32, u32, u32, Option<u32>)>,
    /// Per controller: (holder device, peer device, serve slot var).
    serve_slots: Vec<(DeviceId, DeviceId, u32)>,
}

fn mapping_from_vars(name: &str, vars: MapVars) -> RefinementMapping<CompositionState> {
    RefinementMapping::new(name, move |s: &CompositionState| {
        let mut st = SystemState::empty();
        match s.eta[vars.ds_policy as usize] {
            CondVal::Policy(p) => st = st.with_base_entry(vars.subject, vars.subject, p),
            CondVal::Undefined => {}
            other => return Err(format!("subject policy variable holds {other:?}")),
        }
        let item_val = cond_to_value(s.eta[vars.ds_item as usize])?;
        st = st.with_value(vars.subject, vars.item, item_val);
        for (dc, entry_var, own_var, got_pol, got_item, collect_action) in &vars.controllers {
            match s.eta[*entry_var as usize] {
                CondVal::Policy(p) => st = st.with_base_entry(vars.subject, *dc, p),
                CondVal::Undefined => {}
                other => return Err(format!("subject-side entry for controller holds {other:?}")),
            }
            match s.eta[*own_var as usize] {
                CondVal::Policy(p) => st = st.with_base_entry(*dc, *dc, p),
                CondVal::Undefined => {}
                other => return Err(format!("controller policy variable holds {other:?}")),
            }
            match s.eta[*got_pol as usize] {
                CondVal::Policy(p) => {
                    st = st.with_received_entry(*dc, vars.subject, vars.item, p);
                    let v = cond_to_value(s.eta[*got_item as usize])?;
                    st = st.with_value(*dc, vars.item, v);
                }
                CondVal::Undefined => {
                    if let Some(action) = collect_action {
                        for (a, payload) in &s.msgs {
                            if a == action && payload.len() == 2 {
                                let CondVal::Policy(p) = payload[0] else {
                                    return Err("collection message carries a non-policy".into());
                                };
                                st = st.with_received_entry(*dc, vars.subject, vars.item, p);
                                st = st.with_value(*dc, vars.item, cond_to_value(payload[1])?);
                            }
                        }
                    }
                }
                other => return Err(format!("collected policy variable holds {other:?}")),
            }
        }
        for (holder, peer, var) in &vars.serve_slots {
            match s.eta[*var as usize] {
                CondVal::Policy(p) => st = st.with_base_entry(*holder, *peer, p),
                CondVal::Undefined => {}
                other => return Err(format!("serve slot holds {other:?}")),
            }
        }
        Ok(st)
    })
}

/// Direct-communication system: the subject gateway answers each
/// controller's request, sending the item only when the offered policy
/// subsumes the subject's; controller gateways request, collect, and can
/// serve onward-transfer requests from peer controllers.
pub fn build_direct_system(cfg: Arc<ModelConfig>, spec: &SystemSpec) -> Result<BuiltSystem, BuildError> {
    validate_common(&cfg, spec)?;
    let ont = &cfg.ontology;
    let g = guards(&cfg);
    let item_type = ont.type_of(spec.item);
    let dc_names: Vec<String> =
        spec.controllers.iter().map(|d| ont.device(*d).name.clone()).collect();
    let ds_name = ont.device(spec.subject).name.clone();

    // Subject gateway: s0 --init--> s1; per controller, s1 --?request-->
    // s2_c --(send | reject)--> s1.
    let mut ds_locs = vec!["s0".to_string(), "s1".to_string()];
    let mut ds_vars = vec![format!("{ds_name}.policy"), format!("{ds_name}.item")];
    let mut ds_trs = vec![PgTransition {
        from: 0,
        to: 1,
        action: PgAction::Internal("init".into()),
        guard: Condition::True,
        assigns: vec![],
        clears: vec![],
    }];
    let scratch = (2 + dc_names.len()) as u32;
    for (j, dc) in dc_names.iter().enumerate() {
        ds_vars.push(format!("{ds_name}.offer_from_{dc}"));
        let loc = ds_locs.len() as u32;
        ds_locs.push(format!("s2_{dc}"));
        let offer = (2 + j) as u32;
        ds_trs.push(PgTransition {
            from: 1,
            to: loc,
            action: PgAction::Recv(format!("request_{dc}"), vec![scratch]),
            guard: Condition::True,
            assigns: vec![(offer, Term::Ref(scratch))],
            clears: vec![scratch],
        });
        let compliant = Condition::and(
            Condition::Pred(g.subsumes, Term::Ref(offer), Term::Ref(0)),
            Condition::Pred(g.applies_to, Term::Ref(offer), Term::Type(item_type)),
        );
        let send_guard = match spec.mutation {
            Mutation::DropSendGuard => {
                Condition::Pred(g.applies_to, Term::Ref(offer), Term::Type(item_type))
            }
            _ => compliant.clone(),
        };
        ds_trs.push(PgTransition {
            from: loc,
            to: 1,
            action: PgAction::Send(format!("send_{dc}"), vec![Term::Ref(offer), Term::Ref(1)]),
            guard: send_guard,
            assigns: vec![],
            clears: vec![],
        });
        ds_trs.push(PgTransition {
            from: loc,
            to: 1,
            action: PgAction::Internal("reject".into()),
            guard: Condition::not(compliant),
            assigns: vec![],
            clears: vec![],
        });
    }
    ds_vars.push(format!("{ds_name}.msg_policy"));
    let ds_pg = ProgramGraph {
        name: ds_name.clone(),
        locations: ds_locs,
        initial_location: 0,
        variables: ds_vars,
        initial_valuations: cross(vec![
            policy_choices(&cfg, spec.subject),
            value_choices(&cfg, spec.item),
        ])
        .into_iter()
        .map(|mut row| {
            row.extend(vec![CondVal::Undefined; dc_names.len() + 1]);
            row
        })
        .collect(),
        transitions: ds_trs,
    };

    // Controller gateways: s0 --init--> s1 --!request--> s2 --?send--> s3,
    // then a transfer-serving loop per peer controller.
    let mut pgs = vec![ds_pg];
    let mut serve_layout = Vec::new();
    for (j, dc) in dc_names.iter().enumerate() {
        let dev = spec.controllers[j];
        let mut locs = vec!["s0".into(), "s1".into(), "s2".into(), "s3".into()];
        let mut vars = vec![
            format!("{dc}.policy"),
            format!("{dc}.collected_policy"),
            format!("{dc}.collected_item"),
            format!("{dc}.msg_a"),
            format!("{dc}.msg_b"),
        ];
        let mut trs = vec![
            PgTransition {
                from: 0,
                to: 1,
                action: PgAction::Internal("init".into()),
                guard: Condition::True,
                assigns: vec![],
                clears: vec![],
            },
            PgTransition {
                from: 1,
                to: 2,
                action: PgAction::Send(format!("request_{dc}"), vec![Term::Ref(0)]),
                guard: Condition::True,
                assigns: vec![],
                clears: vec![],
            },
            PgTransition {
                from: 2,
                to: 3,
                action: PgAction::Recv(format!("send_{dc}"), vec![3, 4]),
                guard: Condition::True,
                assigns: vec![(1, Term::Ref(3)), (2, Term::Ref(4))],
                clears: vec![3, 4],
            },
        ];
        for (m, peer) in dc_names.iter().enumerate() {
            if m == j {
                continue;
            }
            let serve = vars.len() as u32;
            vars.push(format!("{dc}.offer_from_{peer}"));
            serve_layout.push((dev, spec.controllers[m], format!("{dc}.offer_from_{peer}")));
            let loc = locs.len() as u32;
            locs.push(format!("s4_{peer}"));
            trs.push(PgTransition {
                from: 3,
                to: loc,
                action: PgAction::Recv(format!("request_{peer}_at_{dc}"), vec![3]),
                guard: Condition::True,
                assigns: vec![(serve, Term::Ref(3))],
                clears: vec![3],
            });
            let ok = Condition::Pred(g.subsumes, Term::Ref(serve), Term::Ref(1));
            trs.push(PgTransition {
                from: loc,
                to: 3,
                action: PgAction::Send(
                    format!("send_{dc}_to_{peer}"),
                    vec![Term::Ref(serve), Term::Ref(2)],
                ),
                guard: ok.clone(),
                assigns: vec![],
                clears: vec![],
            });
            trs.push(PgTransition {
                from: loc,
                to: 3,
                action: PgAction::Internal("reject".into()),
                guard: Condition::not(ok),
                assigns: vec![],
                clears: vec![],
            });
        }
        let n_vars = vars.len();
        pgs.push(ProgramGraph {
            name: dc.clone(),
            locations: locs,
            initial_location: 0,
            variables: vars,
            initial_valuations: cross(vec![policy_choices(&cfg, dev)])
                .into_iter()
                .map(|mut row| {
                    row.extend(vec![CondVal::Undefined; n_vars - 1]);
                    row
                })
                .collect(),
            transitions: trs,
        });
    }

    let system = compose(cfg.clone(), pgs, spec.mode)?;
    let var = |name: &str| {
        system
            .var_index(name)
            .unwrap_or_else(|| panic!("builder variable '{name}' missing"))
    };
    let controllers = spec
        .controllers
        .iter()
        .zip(&dc_names)
        .map(|(dev, dc)| {
            (
                *dev,
                var(&format!("{ds_name}.offer_from_{dc}")),
                var(&format!("{dc}.policy")),
                var(&format!("{dc}.collected_policy")),
                var(&format!("{dc}.collected_item")),
                system.action_id(&format!("send_{dc}")),
            )
        })
        .collect();
    let serve_slots = serve_layout
        .into_iter()
        .map(|(holder, peer, name)| (holder, peer, var(&name)))
        .collect();
    let mapping = mapping_from_vars(
        "direct",
        MapVars {
            subject: spec.subject,
            item: spec.item,
            ds_policy: var(&format!("{ds_name}.policy")),
            ds_item: var(&format!("{ds_name}.item")),
            controllers,
            serve_slots,
        },
    );
    Ok(BuiltSystem { system, mapping })
}

/// Indirect-communication system: controllers upload their policies to a
/// repository; the subject downloads the repository database and broadcasts
/// the item toward each controller whose policy subsumes its own; controller
/// gateways accept broadcasts addressed to them and discard the rest.
pub fn build_indirect_system(
    cfg: Arc<ModelConfig>,
    spec: &SystemSpec,
) -> Result<BuiltSystem, BuildError> {
    validate_common(&cfg, spec)?;
    let repo_dev = spec
        .repository
        .ok_or_else(|| BuildError::Config("indirect systems need a repository device".into()))?;
    let ont = &cfg.ontology;
    let g = guards(&cfg);
    let item_type = ont.type_of(spec.item);
    let ds_name = ont.device(spec.subject).name.clone();
    let repo_name = ont.device(repo_dev).name.clone();
    let dc_names: Vec<String> =
        spec.controllers.iter().map(|d| ont.device(*d).name.clone()).collect();
    let k = dc_names.len();

    // Subject gateway: init; request the policy database; download it; then
    // broadcast toward every compliant controller, with a refresh loop.
    let mut ds_vars = vec![format!("{ds_name}.policy"), format!("{ds_name}.item")];
    for dc in &dc_names {
        ds_vars.push(format!("{ds_name}.db_{dc}"));
    }
    for dc in &dc_names {
        ds_vars.push(format!("{ds_name}.msg_{dc}"));
    }
    let db = |j: usize| (2 + j) as u32;
    let scratch = |j: usize| (2 + k + j) as u32;
    let mut ds_trs = vec![
        PgTransition {
            from: 0,
            to: 1,
            action: PgAction::Internal("init".into()),
            guard: Condition::True,
            assigns: vec![],
            clears: vec![],
        },
        PgTransition {
            from: 1,
            to: 2,
            action: PgAction::Send("request_policies".into(), vec![]),
            guard: Condition::True,
            assigns: vec![],
            clears: vec![],
        },
        PgTransition {
            from: 2,
            to: 3,
            action: PgAction::Recv("download".into(), (0..k).map(scratch).collect()),
            guard: Condition::True,
            assigns: (0..k).map(|j| (db(j), Term::Ref(scratch(j)))).collect(),
            clears: (0..k).map(scratch).collect(),
        },
        PgTransition {
            from: 3,
            to: 1,
            action: PgAction::Internal("refresh".into()),
            guard: Condition::True,
            assigns: vec![],
            clears: (0..k).map(db).collect(),
        },
    ];
    for (j, _dc) in dc_names.iter().enumerate() {
        let guard = Condition::and(
            Condition::Pred(g.subsumes, Term::Ref(db(j)), Term::Ref(0)),
            Condition::Pred(g.applies_to, Term::Ref(db(j)), Term::Type(item_type)),
        );
        ds_trs.push(PgTransition {
            from: 3,
            to: 3,
            action: PgAction::Send(
                "broadcast".into(),
                vec![Term::Ref(1), Term::Dev(spec.controllers[j]), Term::Ref(db(j))],
            ),
            guard,
            assigns: vec![],
            clears: vec![],
        });
    }
    let n_ds_vars = ds_vars.len();
    let ds_pg = ProgramGraph {
        name: ds_name.clone(),
        locations: vec!["s0".into(), "s1".into(), "s2".into(), "s3".into()],
        initial_location: 0,
        variables: ds_vars,
        initial_valuations: cross(vec![
            policy_choices(&cfg, spec.subject),
            value_choices(&cfg, spec.item),
        ])
        .into_iter()
        .map(|mut row| {
            row.extend(vec![CondVal::Undefined; n_ds_vars - 2]);
            row
        })
        .collect(),
        transitions: ds_trs,
    };

    // Repository: accumulates uploads in per-controller slots and answers
    // download requests with the whole database. Policies are stored and
    // sent, never modified.
    let mut repo_vars: Vec<String> =
        dc_names.iter().map(|dc| format!("{repo_name}.db_{dc}")).collect();
    repo_vars.push(format!("{repo_name}.msg"));
    let upload_scratch = k as u32;
    let mut repo_trs = Vec::new();
    for (j, dc) in dc_names.iter().enumerate() {
        repo_trs.push(PgTransition {
            from: 0,
            to: 0,
            action: PgAction::Recv(format!("upload_{dc}"), vec![upload_scratch]),
            guard: Condition::True,
            assigns: vec![(j as u32, Term::Ref(upload_scratch))],
            clears: vec![upload_scratch],
        });
    }
    repo_trs.push(PgTransition {
        from: 0,
        to: 1,
        action: PgAction::Recv("request_policies".into(), vec![]),
        guard: Condition::True,
        assigns: vec![],
        clears: vec![],
    });
    repo_trs.push(PgTransition {
        from: 1,
        to: 0,
        action: PgAction::Send("download".into(), (0..k).map(|j| Term::Ref(j as u32)).collect()),
        guard: Condition::True,
        assigns: vec![],
        clears: vec![],
    });
    let repo_pg = ProgramGraph {
        name: repo_name.clone(),
        locations: vec!["r0".into(), "r1".into()],
        initial_location: 0,
        variables: repo_vars,
        initial_valuations: vec![vec![CondVal::Undefined; k + 1]],
        transitions: repo_trs,
    };

    // Controller gateways: init; upload; then collect broadcasts, accepting
    // those addressed to them under a subsuming policy and discarding the
    // rest.
    let mut pgs = vec![ds_pg, repo_pg];
    let mut serve_layout = Vec::new();
    for (j, dc) in dc_names.iter().enumerate() {
        let dev = spec.controllers[j];
        let mut locs = vec!["t0".into(), "t1".into(), "t2".into(), "t3".into()];
        let mut vars = vec![
            format!("{dc}.policy"),
            format!("{dc}.collected_policy"),
            format!("{dc}.collected_item"),
            format!("{dc}.msg_item"),
            format!("{dc}.msg_addr"),
            format!("{dc}.msg_policy"),
        ];
        let accept_guard = Condition::and(
            Condition::Pred(g.eq, Term::Ref(4), Term::Dev(dev)),
            Condition::Pred(g.subsumes, Term::Ref(5), Term::Ref(0)),
        );
        let mutated_accept = match spec.mutation {
            Mutation::DropAcceptGuard => Condition::True,
            _ => accept_guard.clone(),
        };
        let mut trs = vec![
            PgTransition {
                from: 0,
                to: 1,
                action: PgAction::Internal("init".into()),
                guard: Condition::True,
                assigns: vec![],
                clears: vec![],
            },
            PgTransition {
                from: 1,
                to: 2,
                action: PgAction::Send(format!("upload_{dc}"), vec![Term::Ref(0)]),
                guard: Condition::True,
                assigns: vec![],
                clears: vec![],
            },
            PgTransition {
                from: 2,
                to: 3,
                action: PgAction::Recv("broadcast".into(), vec![3, 4, 5]),
                guard: mutated_accept,
                assigns: vec![(1, Term::Ref(5)), (2, Term::Ref(3))],
                clears: vec![3, 4, 5],
            },
            PgTransition {
                from: 2,
                to: 2,
                action: PgAction::Recv("broadcast".into(), vec![3, 4, 5]),
                guard: Condition::not(accept_guard),
                assigns: vec![],
                clears: vec![3, 4, 5],
            },
        ];
        if spec.dc_transfers {
            for (m, peer) in dc_names.iter().enumerate() {
                if m == j {
                    continue;
                }
                let serve = vars.len() as u32;
                vars.push(format!("{dc}.offer_from_{peer}"));
                serve_layout.push((dev, spec.controllers[m], format!("{dc}.offer_from_{peer}")));
                let loc = locs.len() as u32;
                locs.push(format!("t4_{peer}"));
                trs.push(PgTransition {
                    from: 3,
                    to: loc,
                    action: PgAction::Recv(format!("request_{peer}_at_{dc}"), vec![3]),
                    guard: Condition::True,
                    assigns: vec![(serve, Term::Ref(3))],
                    clears: vec![3],
                });
                let ok = Condition::Pred(g.subsumes, Term::Ref(serve), Term::Ref(1));
                trs.push(PgTransition {
                    from: loc,
                    to: 3,
                    action: PgAction::Send(
                        format!("send_{dc}_to_{peer}"),
                        vec![Term::Ref(serve), Term::Ref(2)],
                    ),
                    guard: ok.clone(),
                    assigns: vec![],
                    clears: vec![],
                });
                trs.push(PgTransition {
                    from: loc,
                    to: 3,
                    action: PgAction::Internal("reject".into()),
                    guard: Condition::not(ok),
                    assigns: vec![],
                    clears: vec![],
                });
            }
        }
        let n_vars = vars.len();
        pgs.push(ProgramGraph {
            name: dc.clone(),
            locations: locs,
            initial_location: 0,
            variables: vars,
            initial_valuations: cross(vec![policy_choices(&cfg, dev)])
                .into_iter()
                .map(|mut row| {
                    row.extend(vec![CondVal::Undefined; n_vars - 1]);
                    row
                })
                .collect(),
            transitions: trs,
        });
    }

    let system = compose(cfg.clone(), pgs, spec.mode)?;
    let var = |name: &str| {
        system
            .var_index(name)
            .unwrap_or_else(|| panic!("builder variable '{name}' missing"))
    };
    // The repository database is part of the subject's policy base under the
    // mapping: an upload is the abstract request communicating the
    // controller's policy to the owner.
    let controllers = spec
        .controllers
        .iter()
        .zip(&dc_names)
        .map(|(dev, dc)| {
            (
                *dev,
                var(&format!("{repo_name}.db_{dc}")),
                var(&format!("{dc}.policy")),
                var(&format!("{dc}.collected_policy")),
                var(&format!("{dc}.collected_item")),
                None,
            )
        })
        .collect();
    let serve_slots = serve_layout
        .into_iter()
        .map(|(holder, peer, name)| (holder, peer, var(&name)))
        .collect();
    let mapping = mapping_from_vars(
        "indirect",
        MapVars {
            subject: spec.subject,
            item: spec.item,
            ds_policy: var(&format!("{ds_name}.policy")),
            ds_item: var(&format!("{ds_name}.item")),
            controllers,
            serve_slots,
        },
    );
    Ok(BuiltSystem { system, mapping })
}

/// An abstract-state invariant checked directly on an implementation system
/// through its refinement mapping. States the mapping rejects count as
/// violations.
pub fn mapped_invariant(
    inv: &crate::checker::InvariantSpec<SystemState>,
    mapping: &RefinementMapping<CompositionState>,
) -> crate::checker::InvariantSpec<CompositionState> {
    let name = format!("{}@{}", inv.name, mapping.name);
    let inv = inv.clone();
    let mapping = mapping.clone();
    let mut spec = crate::checker::InvariantSpec::new(&name, move |s: &CompositionState| {
        match mapping.apply(s) {
            Ok(abs) => inv.holds(&abs),
            Err(_) => false,
        }
    });
    spec.note = Some("evaluated on mapped abstract states".into());
    spec
}
