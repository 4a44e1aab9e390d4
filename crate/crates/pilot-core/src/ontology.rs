//! Finite universes for consent models: entities, datatypes and purposes with
//! their partial orders, plus the device and data-item tables every other
//! module resolves names against.
//!
//! Orders are closed (reflexive-transitive) at load time and cyclic
//! declarations are rejected, so `leq` is a plain table lookup afterwards.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Index into the entity table of an [`Ontology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

/// Index into the datatype table of an [`Ontology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeId(pub u32);

/// Index into the purpose table of an [`Ontology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PurposeId(pub u32);

/// Index into the device table of an [`Ontology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceId(pub u32);

/// Index into the data-item table of an [`Ontology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u32);

/// Index into the declared-constant table of an [`Ontology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymId(pub u32);

/// The value of a data item: a natural number, a declared named constant, or
/// the distinguished undefined marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Undefined,
    Nat(u64),
    Sym(SymId),
}

impl Value {
    pub fn is_defined(&self) -> bool {
        !matches!(self, Value::Undefined)
    }
}

/// Role a device plays in a model. Roles drive the built-in privacy
/// requirements (which quantify over controller devices) and the case-study
/// system builders; the semantics rules themselves are role-free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Subject,
    Controller,
    Repository,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Subject => write!(f, "ds"),
            Role::Controller => write!(f, "dc"),
            Role::Repository => write!(f, "repository"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OntologyError {
    #[error("order over {universe}: elements {a} and {b} form a cycle")]
    Cycle { universe: String, a: String, b: String },
    #[error("{section}: reference to undeclared name '{name}'")]
    DanglingReference { section: String, name: String },
    #[error("{section}: duplicate declaration of '{name}'")]
    Duplicate { section: String, name: String },
    #[error("unknown element '{0}'")]
    UnknownElement(String),
}

/// A finite partial order stored as the reflexive-transitive closure of the
/// declared edges. Construction rejects antisymmetry violations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialOrder {
    names: Vec<String>,
    index: BTreeMap<String, u32>,
    /// Row-major `n x n` closure: `closed[a * n + b]` iff `a <= b`.
    closed: Vec<bool>,
}

impl PartialOrder {
    /// Builds the order from declared elements and edges, computing the
    /// reflexive-transitive closure and rejecting cycles between distinct
    /// elements.
    pub fn new(
        universe: &str,
        elements: Vec<String>,
        edges: &[(String, String)],
    ) -> Result<Self, OntologyError> {
        let mut index = BTreeMap::new();
        for (i, name) in elements.iter().enumerate() {
            if index.insert(name.clone(), i as u32).is_some() {
                return Err(OntologyError::Duplicate {
                    section: universe.to_string(),
                    name: name.clone(),
                });
            }
        }
        let n = elements.len();
        let mut closed = vec![false; n * n];
        for i in 0..n {
            closed[i * n + i] = true;
        }
        for (a, b) in edges {
            let ia = *index.get(a).ok_or_else(|| OntologyError::DanglingReference {
                section: universe.to_string(),
                name: a.clone(),
            })? as usize;
            let ib = *index.get(b).ok_or_else(|| OntologyError::DanglingReference {
                section: universe.to_string(),
                name: b.clone(),
            })? as usize;
            closed[ia * n + ib] = true;
        }
        // Warshall saturation.
        for k in 0..n {
            for i in 0..n {
                if closed[i * n + k] {
                    for j in 0..n {
                        if closed[k * n + j] {
                            closed[i * n + j] = true;
                        }
                    }
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if closed[i * n + j] && closed[j * n + i] {
                    return Err(OntologyError::Cycle {
                        universe: universe.to_string(),
                        a: elements[i].clone(),
                        b: elements[j].clone(),
                    });
                }
            }
        }
        Ok(PartialOrder { names: elements, index, closed })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn id(&self, name: &str) -> Result<u32, OntologyError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| OntologyError::UnknownElement(name.to_string()))
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }

    /// True iff `a <= b` in the closed relation.
    pub fn leq_ids(&self, a: u32, b: u32) -> bool {
        self.closed[a as usize * self.names.len() + b as usize]
    }

    /// Name-based comparison; errors on elements outside the universe.
    pub fn leq(&self, a: &str, b: &str) -> Result<bool, OntologyError> {
        Ok(self.leq_ids(self.id(a)?, self.id(b)?))
    }

    /// All ordered pairs of the closed relation, for property checks.
    pub fn pairs(&self) -> Vec<(u32, u32)> {
        let n = self.names.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if self.closed[a * n + b] {
                    out.push((a as u32, b as u32));
                }
            }
        }
        out
    }
}

/// Declaration of a device: the entity operating it and its role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceDecl {
    pub name: String,
    pub entity: EntityId,
    pub role: Role,
}

/// Declaration of a data item: its datatype and owner device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemDecl {
    pub name: String,
    pub datatype: TypeId,
    pub owner: DeviceId,
}

/// The model's fixed universe: the three orders plus device, item and
/// constant tables. Immutable after construction and freely shareable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ontology {
    pub entities: PartialOrder,
    pub datatypes: PartialOrder,
    pub purposes: PartialOrder,
    devices: Vec<DeviceDecl>,
    device_index: BTreeMap<String, u32>,
    items: Vec<ItemDecl>,
    item_index: BTreeMap<String, u32>,
    constants: Vec<String>,
    constant_index: BTreeMap<String, u32>,
}

/// Raw, name-based input to [`Ontology::new`]; the typed tables are produced
/// by validation.
#[derive(Debug, Clone, Default)]
pub struct OntologyDecl {
    pub entities: Vec<String>,
    pub entity_edges: Vec<(String, String)>,
    pub datatypes: Vec<String>,
    pub datatype_edges: Vec<(String, String)>,
    pub purposes: Vec<String>,
    pub purpose_edges: Vec<(String, String)>,
    /// (device name, entity name, role)
    pub devices: Vec<(String, String, Role)>,
    /// (item name, datatype name, owner device name)
    pub items: Vec<(String, String, String)>,
    pub constants: Vec<String>,
}

impl Ontology {
    pub fn new(decl: OntologyDecl) -> Result<Self, OntologyError> {
        let entities = PartialOrder::new("entities", decl.entities, &decl.entity_edges)?;
        let datatypes = PartialOrder::new("datatypes", decl.datatypes, &decl.datatype_edges)?;
        let purposes = PartialOrder::new("purposes", decl.purposes, &decl.purpose_edges)?;

        let mut devices = Vec::new();
        let mut device_index = BTreeMap::new();
        for (name, entity, role) in decl.devices {
            let entity = EntityId(entities.id(&entity).map_err(|_| {
                OntologyError::DanglingReference { section: "devices".into(), name: entity.clone() }
            })?);
            if device_index.insert(name.clone(), devices.len() as u32).is_some() {
                return Err(OntologyError::Duplicate { section: "devices".into(), name });
            }
            devices.push(DeviceDecl { name, entity, role });
        }

        let mut items = Vec::new();
        let mut item_index = BTreeMap::new();
        for (name, datatype, owner) in decl.items {
            let datatype = TypeId(datatypes.id(&datatype).map_err(|_| {
                OntologyError::DanglingReference { section: "items".into(), name: datatype.clone() }
            })?);
            let owner = DeviceId(*device_index.get(&owner).ok_or_else(|| {
                OntologyError::DanglingReference { section: "items".into(), name: owner.clone() }
            })?);
            if item_index.insert(name.clone(), items.len() as u32).is_some() {
                return Err(OntologyError::Duplicate { section: "items".into(), name });
            }
            items.push(ItemDecl { name, datatype, owner });
        }

        let mut constants = Vec::new();
        let mut constant_index = BTreeMap::new();
        for name in decl.constants {
            if constant_index.insert(name.clone(), constants.len() as u32).is_some() {
                return Err(OntologyError::Duplicate { section: "values".into(), name });
            }
            constants.push(name);
        }

        Ok(Ontology {
            entities,
            datatypes,
            purposes,
            devices,
            device_index,
            items,
            item_index,
            constants,
            constant_index,
        })
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn devices(&self) -> impl Iterator<Item = (DeviceId, &DeviceDecl)> {
        self.devices.iter().enumerate().map(|(i, d)| (DeviceId(i as u32), d))
    }

    pub fn items(&self) -> impl Iterator<Item = (ItemId, &ItemDecl)> {
        self.items.iter().enumerate().map(|(i, d)| (ItemId(i as u32), d))
    }

    pub fn device(&self, id: DeviceId) -> &DeviceDecl {
        &self.devices[id.0 as usize]
    }

    pub fn item(&self, id: ItemId) -> &ItemDecl {
        &self.items[id.0 as usize]
    }

    pub fn device_id(&self, name: &str) -> Result<DeviceId, OntologyError> {
        self.device_index
            .get(name)
            .map(|i| DeviceId(*i))
            .ok_or_else(|| OntologyError::UnknownElement(name.to_string()))
    }

    pub fn item_id(&self, name: &str) -> Result<ItemId, OntologyError> {
        self.item_index
            .get(name)
            .map(|i| ItemId(*i))
            .ok_or_else(|| OntologyError::UnknownElement(name.to_string()))
    }

    pub fn entity_of(&self, device: DeviceId) -> EntityId {
        self.devices[device.0 as usize].entity
    }

    pub fn type_of(&self, item: ItemId) -> TypeId {
        self.items[item.0 as usize].datatype
    }

    pub fn owner_of(&self, item: ItemId) -> DeviceId {
        self.items[item.0 as usize].owner
    }

    pub fn role_of(&self, device: DeviceId) -> Role {
        self.devices[device.0 as usize].role
    }

    pub fn entity_leq(&self, a: EntityId, b: EntityId) -> bool {
        self.entities.leq_ids(a.0, b.0)
    }

    pub fn type_leq(&self, a: TypeId, b: TypeId) -> bool {
        self.datatypes.leq_ids(a.0, b.0)
    }

    pub fn purpose_leq(&self, a: PurposeId, b: PurposeId) -> bool {
        self.purposes.leq_ids(a.0, b.0)
    }

    pub fn constant_id(&self, name: &str) -> Result<SymId, OntologyError> {
        self.constant_index
            .get(name)
            .map(|i| SymId(*i))
            .ok_or_else(|| OntologyError::UnknownElement(name.to_string()))
    }

    pub fn constant_name(&self, id: SymId) -> &str {
        &self.constants[id.0 as usize]
    }

    pub fn constants(&self) -> impl Iterator<Item = &str> {
        self.constants.iter().map(|s| s.as_str())
    }

    pub fn value_text(&self, v: Value) -> String {
        match v {
            Value::Undefined => "undefined".to_string(),
            Value::Nat(n) => n.to_string(),
            Value::Sym(s) => self.constant_name(s).to_string(),
        }
    }
}
