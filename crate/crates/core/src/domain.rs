//! Kit-fulfillment planning domain.
//!
//! A worker assembles a required multiset of items into a kit box. Items
//! live in containers; at most one container fits on the unloading
//! platform at a time. Per step a worker either fetches a container from
//! storage onto the platform, stows the platform container back, or
//! places one item from the platform container into the kit. The task is
//! done when the kit matches the requirement and the platform is empty.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default cap on the reachable state count.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// The bundled two-container example instance (108 reachable states,
/// optimal completion in 10 human actions).
pub const CANONICAL_INSTANCE_JSON: &str = r#"{
    "containers": [
        {"id": "C1", "contents": {"bolt": 2, "nut": 2}},
        {"id": "C2", "contents": {"washer": 2, "gear": 2}}
    ],
    "requirement": {"bolt": 2, "nut": 1, "washer": 2, "gear": 1}
}"#;

/// On-disk instance document (see the JSON schema in the README).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct InstanceDoc {
    pub containers: Vec<ContainerDoc>,
    pub requirement: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ContainerDoc {
    pub id: String,
    pub contents: BTreeMap<String, u32>,
}

/// Validated kit-fulfillment instance.
///
/// Item types are the required types in sorted order; containers keep
/// their document order. Each item type resides in exactly one container
/// (enforced at parse time), so remaining container contents are always
/// derivable from the placed counts.
#[derive(Debug, Clone)]
pub struct KitInstance {
    doc: InstanceDoc,
    items: Vec<String>,
    requirement: Vec<u32>,
    container_ids: Vec<String>,
    /// Container index holding each item type.
    item_source: Vec<usize>,
}

impl KitInstance {
    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn requirement(&self) -> &[u32] {
        &self.requirement
    }

    pub fn container_ids(&self) -> &[String] {
        &self.container_ids
    }

    pub fn num_containers(&self) -> usize {
        self.container_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    /// Container that holds the given item type.
    pub fn item_source(&self, item: usize) -> usize {
        self.item_source[item]
    }

    pub fn doc(&self) -> &InstanceDoc {
        &self.doc
    }

    /// Canonical JSON encoding of the instance (sorted keys, no notes
    /// normalization). Used for cache keys.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.doc).expect("instance doc serializes")
    }

    /// Initial state: platform empty, nothing placed.
    pub fn initial_state(&self) -> KitState {
        KitState {
            platform: None,
            placed: vec![0; self.items.len()],
        }
    }
}

/// Fully observable environment state of one worker's station.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KitState {
    /// Container currently on the unloading platform, if any.
    pub platform: Option<usize>,
    /// Items already in the kit box, indexed like `KitInstance::items`.
    pub placed: Vec<u32>,
}

impl KitState {
    /// Canonical encoding used for the deterministic enumeration order.
    fn sort_key(&self) -> (usize, Vec<u32>) {
        let platform_code = match self.platform {
            None => 0,
            Some(c) => c + 1,
        };
        (platform_code, self.placed.clone())
    }
}

/// One human action at a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HumanAction {
    /// Move a container from storage onto the platform.
    Fetch(usize),
    /// Return the platform container to storage.
    Stow(usize),
    /// Move one item of the given type from the platform container into
    /// the kit box.
    Place(usize),
}

impl HumanAction {
    pub fn describe(&self, inst: &KitInstance) -> String {
        match *self {
            HumanAction::Fetch(c) => format!("fetch({})", inst.container_ids()[c]),
            HumanAction::Stow(c) => format!("stow({})", inst.container_ids()[c]),
            HumanAction::Place(i) => format!("place({})", inst.items()[i]),
        }
    }
}

impl fmt::Display for HumanAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            HumanAction::Fetch(c) => write!(f, "fetch(#{c})"),
            HumanAction::Stow(c) => write!(f, "stow(#{c})"),
            HumanAction::Place(i) => write!(f, "place(#{i})"),
        }
    }
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<KitInstance> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    validate_instance(doc)
}

fn validate_instance(doc: InstanceDoc) -> Result<KitInstance> {
    if doc.containers.is_empty() {
        return Err(Error::Semantic("instance has no containers".into()));
    }

    let container_ids: Vec<String> = doc.containers.iter().map(|c| c.id.clone()).collect();
    for (i, id) in container_ids.iter().enumerate() {
        if container_ids[..i].contains(id) {
            return Err(Error::Semantic(format!("duplicate container id {id:?}")));
        }
    }

    // Single-source rule: no item type may appear in two containers.
    let mut source_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (ci, c) in doc.containers.iter().enumerate() {
        for item in c.contents.keys() {
            if source_of.insert(item, ci).is_some() {
                return Err(Error::Semantic(format!(
                    "item {item:?} appears in more than one container"
                )));
            }
        }
    }

    let items: Vec<String> = doc.requirement.keys().cloned().collect();
    let mut requirement = Vec::with_capacity(items.len());
    let mut item_source = Vec::with_capacity(items.len());
    for item in &items {
        let need = doc.requirement[item];
        let Some(&ci) = source_of.get(item.as_str()) else {
            return Err(Error::Semantic(format!(
                "required item {item:?} is not held by any container"
            )));
        };
        let have = doc.containers[ci].contents[item];
        if have < need {
            return Err(Error::Semantic(format!(
                "container {:?} holds {have} of item {item:?}, requirement is {need}",
                container_ids[ci]
            )));
        }
        requirement.push(need);
        item_source.push(ci);
    }

    Ok(KitInstance {
        doc,
        items,
        requirement,
        container_ids,
        item_source,
    })
}

/// True iff the kit matches the requirement and the platform is empty
/// (the container has been returned to storage).
pub fn is_terminal(inst: &KitInstance, x: &KitState) -> bool {
    x.platform.is_none() && x.placed == inst.requirement
}

/// Legal human actions in `x`, in the deterministic order
/// Fetch(0..), Stow(0..), Place(0..). Empty exactly at the terminal state.
pub fn legal_actions(inst: &KitInstance, x: &KitState) -> Vec<HumanAction> {
    let mut actions = Vec::new();
    match x.platform {
        None => {
            if !is_terminal(inst, x) {
                for c in 0..inst.num_containers() {
                    actions.push(HumanAction::Fetch(c));
                }
            }
        }
        Some(on_platform) => {
            actions.push(HumanAction::Stow(on_platform));
            for i in 0..inst.num_items() {
                if inst.item_source(i) == on_platform && x.placed[i] < inst.requirement[i] {
                    actions.push(HumanAction::Place(i));
                }
            }
        }
    }
    actions
}

/// Deterministic successor of a legal action.
pub fn transition(inst: &KitInstance, x: &KitState, a: HumanAction) -> Result<KitState> {
    if !legal_actions(inst, x).contains(&a) {
        return Err(Error::Contract(format!("action {a} illegal in state {x:?}")));
    }
    let mut next = x.clone();
    match a {
        HumanAction::Fetch(c) => next.platform = Some(c),
        HumanAction::Stow(_) => next.platform = None,
        HumanAction::Place(i) => next.placed[i] += 1,
    }
    Ok(next)
}

/// Densely indexed reachable state space of an instance, with cached
/// legal-action lists and successor indices.
///
/// Ordering is deterministic: lexicographic on (platform, placed).
#[derive(Debug, Clone)]
pub struct StateSpace {
    states: Vec<KitState>,
    index_of: HashMap<KitState, usize>,
    legal: Vec<Vec<HumanAction>>,
    successors: Vec<Vec<usize>>,
    terminal: Vec<bool>,
    initial: usize,
}

impl StateSpace {
    /// Enumerates all states reachable from the initial state.
    pub fn enumerate(inst: &KitInstance, cap: usize) -> Result<StateSpace> {
        let initial = inst.initial_state();
        let mut seen: HashMap<KitState, ()> = HashMap::new();
        let mut queue = VecDeque::new();
        seen.insert(initial.clone(), ());
        queue.push_back(initial.clone());
        while let Some(x) = queue.pop_front() {
            if seen.len() > cap {
                return Err(Error::CapacityExceeded { cap });
            }
            for a in legal_actions(inst, &x) {
                let next = transition(inst, &x, a)?;
                if !seen.contains_key(&next) {
                    seen.insert(next.clone(), ());
                    queue.push_back(next);
                }
            }
        }

        let mut states: Vec<KitState> = seen.into_keys().collect();
        states.sort_by_key(|s| s.sort_key());

        let index_of: HashMap<KitState, usize> = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let legal: Vec<Vec<HumanAction>> =
            states.iter().map(|s| legal_actions(inst, s)).collect();
        let successors: Vec<Vec<usize>> = states
            .iter()
            .zip(&legal)
            .map(|(s, acts)| {
                acts.iter()
                    .map(|&a| {
                        let next = transition(inst, s, a).expect("cached action is legal");
                        index_of[&next]
                    })
                    .collect()
            })
            .collect();
        let terminal: Vec<bool> = states.iter().map(|s| is_terminal(inst, s)).collect();
        let initial = index_of[&initial];

        Ok(StateSpace {
            states,
            index_of,
            legal,
            successors,
            terminal,
            initial,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, idx: usize) -> &KitState {
        &self.states[idx]
    }

    pub fn states(&self) -> &[KitState] {
        &self.states
    }

    pub fn index_of(&self, x: &KitState) -> Option<usize> {
        self.index_of.get(x).copied()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_terminal(&self, idx: usize) -> bool {
        self.terminal[idx]
    }

    /// Cached legal actions, same order as [`legal_actions`].
    pub fn legal(&self, idx: usize) -> &[HumanAction] {
        &self.legal[idx]
    }

    /// Successor indices aligned with `legal(idx)`.
    pub fn successors(&self, idx: usize) -> &[usize] {
        &self.successors[idx]
    }

    /// Position of an action within `legal(idx)`, if legal.
    pub fn action_position(&self, idx: usize, a: HumanAction) -> Option<usize> {
        self.legal[idx].iter().position(|&b| b == a)
    }

    /// Every distinct action that is legal in at least one state, in the
    /// global deterministic order Fetch(0..), Stow(0..), Place(0..).
    pub fn all_actions(&self, inst: &KitInstance) -> Vec<HumanAction> {
        let mut actions = Vec::new();
        for c in 0..inst.num_containers() {
            actions.push(HumanAction::Fetch(c));
        }
        for c in 0..inst.num_containers() {
            actions.push(HumanAction::Stow(c));
        }
        for i in 0..inst.num_items() {
            actions.push(HumanAction::Place(i));
        }
        actions
    }
}
