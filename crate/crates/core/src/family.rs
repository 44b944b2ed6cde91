//! Brute-force checks of projection-family axioms on explicit finite spaces: projection-ness,
//! consistency, strong consistency, completeness, atomic projections and representations.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{domain, Error, Result};
use crate::graph::{token, SpaceSpec, DEFAULT_CAP};

/// Distinct opaque element encodings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteSpace {
    elems: Vec<String>,
    pos: HashMap<String, usize>,
}

impl FiniteSpace {
    pub fn new(elems: Vec<String>) -> Result<Self> {
        let mut pos = HashMap::with_capacity(elems.len());
        for (i, e) in elems.iter().enumerate() {
            if pos.insert(e.clone(), i).is_some() {
                return domain(format!("repeated element {e}"));
            }
        }
        Ok(FiniteSpace { elems, pos })
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn elements(&self) -> &[String] {
        &self.elems
    }

    pub fn position(&self, e: &str) -> Option<usize> {
        self.pos.get(e).copied()
    }
}

/// Whether images are subsets of `Ω` (composable directly) or separate substructures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyMode {
    Subset,
    Substructure,
}

/// `π_A: Ω → Ω_A` as an explicit table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Member {
    pub index: BTreeSet<String>,
    pub image: FiniteSpace,
    /// `table[w]` is the position of `π_A(w)` in `image`.
    pub table: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ProjectionFamily {
    omega: FiniteSpace,
    mode: FamilyMode,
    members: Vec<Member>,
    /// Subset mode: image position → position in `Ω`, per member.
    lift: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberJson {
    index: Vec<Value>,
    image: Vec<Value>,
    table: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyJson {
    omega: Vec<Value>,
    #[serde(default)]
    mode: Option<FamilyMode>,
    members: Vec<MemberJson>,
}

fn show_index(a: &BTreeSet<String>) -> String {
    format!("{{{}}}", a.iter().join(","))
}

impl ProjectionFamily {
    pub fn new(omega: FiniteSpace, mode: FamilyMode, members: Vec<Member>) -> Result<Self> {
        let mut seen = HashSet::new();
        for m in &members {
            if !seen.insert(m.index.clone()) {
                return domain(format!("index {} appears twice", show_index(&m.index)));
            }
            if m.table.len() != omega.len() {
                return domain(format!("table for {} does not cover Ω", show_index(&m.index)));
            }
            if m.table.iter().any(|&t| t >= m.image.len()) {
                return domain(format!("table for {} leaves its image", show_index(&m.index)));
            }
        }
        let lift = match mode {
            FamilyMode::Subset => members
                .iter()
                .map(|m| {
                    m.image
                        .elements()
                        .iter()
                        .map(|e| {
                            omega.position(e).ok_or_else(|| {
                                Error::Domain(format!("image element {e} of {} is not in Ω", show_index(&m.index)))
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?,
            FamilyMode::Substructure => Vec::new(),
        };
        Ok(ProjectionFamily {
            omega,
            mode,
            members,
            lift,
        })
    }

    /// `{"omega": [...], "mode": "subset"|"substructure", "members": [{"index", "image", "table"}]}`;
    /// the mode defaults to subset when every image lies in `Ω`.
    pub fn from_json(v: &Value) -> Result<Self> {
        let raw: FamilyJson =
            serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("projection family: {e}")))?;
        let omega = FiniteSpace::new(raw.omega.iter().map(token).collect())?;
        let mut members = Vec::with_capacity(raw.members.len());
        for m in raw.members {
            let image = FiniteSpace::new(m.image.iter().map(token).collect())?;
            let mut table = vec![usize::MAX; omega.len()];
            for (k, val) in &m.table {
                let w = omega
                    .position(k)
                    .ok_or_else(|| Error::Parse(format!("table key {k} is not in Ω")))?;
                table[w] = image
                    .position(&token(val))
                    .ok_or_else(|| Error::Parse(format!("table value {} is not in the image", token(val))))?;
            }
            if let Some(w) = table.iter().position(|&t| t == usize::MAX) {
                return Err(Error::Domain(format!("partial table: {} unmapped", omega.elements()[w])));
            }
            members.push(Member {
                index: m.index.iter().map(token).collect(),
                image,
                table,
            });
        }
        let mode = raw.mode.unwrap_or_else(|| {
            if members
                .iter()
                .all(|m| m.image.elements().iter().all(|e| omega.position(e).is_some()))
            {
                FamilyMode::Subset
            } else {
                FamilyMode::Substructure
            }
        });
        ProjectionFamily::new(omega, mode, members)
    }

    pub fn omega(&self) -> &FiniteSpace {
        &self.omega
    }

    pub fn mode(&self) -> FamilyMode {
        self.mode
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    /// `B`, the union of all indices.
    pub fn base(&self) -> BTreeSet<String> {
        self.members.iter().flat_map(|m| m.index.iter().cloned()).collect()
    }

    pub fn find(&self, index: &BTreeSet<String>) -> Option<usize> {
        self.members.iter().position(|m| &m.index == index)
    }

    pub fn without(&self, index: &BTreeSet<String>) -> Result<Self> {
        let members = self.members.iter().filter(|m| &m.index != index).cloned().collect();
        ProjectionFamily::new(self.omega.clone(), self.mode, members)
    }

    pub fn with_member(&self, m: Member) -> Result<Self> {
        let mut members = self.members.clone();
        members.push(m);
        ProjectionFamily::new(self.omega.clone(), self.mode, members)
    }

    /// Image of member `i` as positions in `Ω` (subset mode).
    fn image_set(&self, i: usize) -> BTreeSet<usize> {
        self.lift[i].iter().copied().collect()
    }

    /// `π_i(w)` as a position in `Ω` (subset mode).
    fn apply(&self, i: usize, w: usize) -> usize {
        self.lift[i][self.members[i].table[w]]
    }

    /// Checks the three indexing conditions: `Ω_B = Ω`; `A' ⊆ A ⇔ Ω_{A'} ⊆ Ω_A`;
    /// `A' ∩ A = ∅ ⇔ Ω_{A'} ∩ Ω_A = ∅`, the last with the point common to every image removed.
    pub fn validate(&self) -> Result<()> {
        let base = self.base();
        if let Some(b) = self.find(&base) {
            let m = &self.members[b];
            let ok = match self.mode {
                FamilyMode::Subset => self.image_set(b).len() == self.omega.len(),
                FamilyMode::Substructure => {
                    m.image.len() == self.omega.len() && m.table.iter().collect::<HashSet<_>>().len() == self.omega.len()
                }
            };
            if !ok {
                return domain(format!("condition 1: Ω_B for B = {} is not Ω", show_index(&base)));
            }
        }
        if self.mode == FamilyMode::Substructure {
            return Ok(());
        }
        let images: Vec<BTreeSet<usize>> = (0..self.members.len()).map(|i| self.image_set(i)).collect();
        let common: BTreeSet<usize> = images
            .iter()
            .skip(1)
            .fold(images.first().cloned().unwrap_or_default(), |acc, s| acc.intersection(s).copied().collect());
        for (i, j) in (0..self.members.len()).tuple_combinations() {
            let (a, b) = (&self.members[i].index, &self.members[j].index);
            for (x, y, ix, iy) in [(a, b, i, j), (b, a, j, i)] {
                if x.is_subset(y) != images[ix].is_subset(&images[iy]) {
                    return domain(format!(
                        "condition 2: index {} ⊆ {} is {} but the image inclusion is {}",
                        show_index(x),
                        show_index(y),
                        x.is_subset(y),
                        images[ix].is_subset(&images[iy])
                    ));
                }
            }
            let idx_disjoint = a.is_disjoint(b);
            let img_disjoint = images[i].intersection(&images[j]).all(|e| common.contains(e));
            if idx_disjoint != img_disjoint {
                return domain(format!(
                    "condition 3: indices {} and {} disjoint is {} but images disjoint is {}",
                    show_index(a),
                    show_index(b),
                    idx_disjoint,
                    img_disjoint
                ));
            }
        }
        Ok(())
    }
}

/// `f ∘ f = f` for a self-map of `Ω` given as element → element.
pub fn is_projection(table: &BTreeMap<String, String>, omega: &FiniteSpace) -> Result<bool> {
    let mut f = vec![0; omega.len()];
    for (w, e) in omega.elements().iter().enumerate() {
        let img = table
            .get(e)
            .ok_or_else(|| Error::Domain(format!("map undefined at {e}")))?;
        f[w] = omega
            .position(img)
            .ok_or_else(|| Error::Domain(format!("map leaves Ω at {e}")))?;
    }
    Ok((0..f.len()).all(|w| f[f[w]] == f[w]))
}

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub property: String,
    pub indices: Vec<String>,
    pub elements: Vec<String>,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BridgeMode {
    /// Derive `π_{A→A'}` from the identity on the image of `π_A`.
    Derived,
    /// Search all maps `Ω_A → Ω_{A'}`, refusing when there are more than `cap`.
    Exhaustive { cap: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyReport {
    pub consistent: bool,
    pub strongly_consistent: bool,
    pub complete: bool,
    /// Pairs whose intersection projection exists but is not unique.
    pub non_unique_intersections: usize,
    /// Bridge values left free by the defining identity (elements of `Ω_A` off the image).
    pub undetermined: Vec<Witness>,
    pub witnesses: Vec<Witness>,
}

struct Bridge {
    exists: bool,
    witness: Option<(usize, usize)>,
    off_image: Vec<usize>,
    solutions: Option<u64>,
}

/// Whether `π_{A→A'} ∘ π_A = π_{A'}` has a solution.
fn bridge(f: &ProjectionFamily, a: usize, b: usize, mode: BridgeMode) -> Result<Bridge> {
    let (ma, mb) = (&f.members[a], &f.members[b]);
    let mut map: Vec<Option<usize>> = vec![None; ma.image.len()];
    let mut first: Vec<usize> = vec![usize::MAX; ma.image.len()];
    let mut witness = None;
    for w in 0..f.omega.len() {
        let x = ma.table[w];
        match map[x] {
            None => {
                map[x] = Some(mb.table[w]);
                first[x] = w;
            }
            Some(y) if y != mb.table[w]
                && witness.is_none() => {
                    witness = Some((first[x], w));
                }
            _ => {}
        }
    }
    let off_image: Vec<usize> = (0..ma.image.len()).filter(|&x| map[x].is_none()).collect();
    let solutions = match mode {
        BridgeMode::Derived => None,
        BridgeMode::Exhaustive { cap } => {
            let size = (mb.image.len() as f64).powi(ma.image.len() as i32);
            if size > cap as f64 {
                return Err(Error::Resource {
                    what: format!("bridge maps {} → {}", show_index(&ma.index), show_index(&mb.index)),
                    size,
                    cap,
                });
            }
            let mut count = 0u64;
            for g in (0..ma.image.len()).map(|_| 0..mb.image.len()).multi_cartesian_product() {
                if (0..f.omega.len()).all(|w| g[ma.table[w]] == mb.table[w]) {
                    count += 1;
                }
            }
            if ma.image.is_empty() && f.omega.is_empty() {
                count = 1;
            }
            Some(count)
        }
    };
    Ok(Bridge {
        exists: witness.is_none(),
        witness,
        off_image,
        solutions,
    })
}

/// Consistency, strong consistency and completeness by exhaustive pairwise checks.
pub fn family_report(f: &ProjectionFamily, bridges: BridgeMode) -> Result<FamilyReport> {
    let n = f.members.len();
    let el = |w: usize| f.omega.elements()[w].clone();
    let idx = |i: usize| show_index(&f.members[i].index);
    let mut witnesses = Vec::new();
    let mut undetermined = Vec::new();
    let mut consistent = true;
    let mut strong = true;
    let mut complete = true;
    let mut non_unique = 0;

    // completeness
    for (i, j) in (0..n).tuple_combinations() {
        let inter: BTreeSet<String> = f.members[i]
            .index
            .intersection(&f.members[j].index)
            .cloned()
            .collect();
        if !inter.is_empty() && f.find(&inter).is_none() {
            complete = false;
            witnesses.push(Witness {
                property: "complete".into(),
                indices: vec![idx(i), idx(j)],
                elements: vec![],
                detail: format!("intersection {} is not an index", show_index(&inter)),
            });
        }
    }

    match f.mode {
        FamilyMode::Subset => {
            let images: Vec<BTreeSet<usize>> = (0..n).map(|i| f.image_set(i)).collect();
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).collect();
            let bad: Vec<Witness> = pairs
                .par_iter()
                .filter(|&&(i, j)| images[i].is_subset(&images[j]))
                .filter_map(|&(i, j)| {
                    (0..f.omega.len())
                        .find(|&w| f.apply(i, f.apply(j, w)) != f.apply(i, w))
                        .map(|w| Witness {
                            property: "consistent".into(),
                            indices: vec![idx(i), idx(j)],
                            elements: vec![el(w)],
                            detail: format!(
                                "π_{}(π_{}(w)) = {} but π_{}(w) = {}",
                                idx(i),
                                idx(j),
                                el(f.apply(i, f.apply(j, w))),
                                idx(i),
                                el(f.apply(i, w))
                            ),
                        })
                })
                .collect();
            if !bad.is_empty() {
                consistent = false;
                witnesses.extend(bad);
            }
            for (i, j) in (0..n).tuple_combinations() {
                let inter: BTreeSet<usize> = images[i].intersection(&images[j]).copied().collect();
                if inter.is_empty() {
                    continue;
                }
                match intersection_projection(f, i, j, &inter) {
                    Ok((_, unique)) => non_unique += usize::from(!unique),
                    Err((a, b)) => {
                        strong = false;
                        witnesses.push(Witness {
                            property: "strongly_consistent".into(),
                            indices: vec![idx(i), idx(j)],
                            elements: vec![el(a), el(b)],
                            detail: "two fixed points of the intersection are forced together".into(),
                        });
                    }
                }
            }
        }
        FamilyMode::Substructure => {
            let mut cache: HashMap<(usize, usize), bool> = HashMap::new();
            for a in 0..n {
                for b in 0..n {
                    if a == b || !f.members[b].index.is_subset(&f.members[a].index) {
                        continue;
                    }
                    let br = bridge(f, a, b, bridges)?;
                    let exists = br.solutions.map_or(br.exists, |s| s > 0);
                    cache.insert((a, b), exists);
                    if let Some((w1, w2)) = br.witness {
                        consistent = false;
                        witnesses.push(Witness {
                            property: "consistent".into(),
                            indices: vec![idx(a), idx(b)],
                            elements: vec![el(w1), el(w2)],
                            detail: format!("equal under π_{} but not under π_{}", idx(a), idx(b)),
                        });
                    }
                    if !br.off_image.is_empty() {
                        undetermined.push(Witness {
                            property: "bridge".into(),
                            indices: vec![idx(a), idx(b)],
                            elements: br
                                .off_image
                                .iter()
                                .map(|&x| f.members[a].image.elements()[x].clone())
                                .collect(),
                            detail: "not in the image of π_A; the bridge is free there".into(),
                        });
                    }
                }
            }
            for (i, j) in (0..n).tuple_combinations() {
                let inter: BTreeSet<String> = f.members[i]
                    .index
                    .intersection(&f.members[j].index)
                    .cloned()
                    .collect();
                if inter.is_empty() {
                    continue;
                }
                let ok = match f.find(&inter) {
                    None => false,
                    Some(k) => {
                        let via = |a: usize| a == k || cache.get(&(a, k)).copied().unwrap_or(false);
                        via(i) && via(j)
                    }
                };
                if !ok {
                    strong = false;
                    witnesses.push(Witness {
                        property: "strongly_consistent".into(),
                        indices: vec![idx(i), idx(j)],
                        elements: vec![],
                        detail: format!("no consistent projection indexed {}", show_index(&inter)),
                    });
                }
            }
        }
    }
    Ok(FamilyReport {
        consistent,
        strongly_consistent: strong,
        complete,
        non_unique_intersections: non_unique,
        undetermined,
        witnesses,
    })
}

/// A projection onto `Ω_i ∩ Ω_j` consistent with both members, and whether it is the only one.
/// On failure returns two fixed points that the constraints identify.
fn intersection_projection(
    f: &ProjectionFamily,
    i: usize,
    j: usize,
    inter: &BTreeSet<usize>,
) -> std::result::Result<(Vec<usize>, bool), (usize, usize)> {
    let n = f.omega.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for w in 0..n {
        for k in [i, j] {
            let a = root(&mut parent, w);
            let b = root(&mut parent, f.apply(k, w));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut fixed: HashMap<usize, usize> = HashMap::new();
    for &x in inter {
        let r = root(&mut parent, x);
        if let Some(&y) = fixed.get(&r) {
            return Err((y, x));
        }
        fixed.insert(r, x);
    }
    let fallback = *inter.iter().next().unwrap();
    let mut unique = true;
    let mut out = vec![0; n];
    for (w, o) in out.iter_mut().enumerate() {
        let r = root(&mut parent, w);
        *o = match fixed.get(&r) {
            Some(&x) => x,
            None => {
                unique &= inter.len() == 1;
                fallback
            }
        };
    }
    Ok((out, unique))
}

/// Adds the intersection projections of strongly consistent pairs until the index set is
/// closed under nonempty intersections (subset mode).
pub fn augment_with_intersections(f: &ProjectionFamily) -> Result<ProjectionFamily> {
    if f.mode != FamilyMode::Subset {
        return domain("augmentation builds images inside Ω and needs subset mode");
    }
    let mut cur = f.clone();
    loop {
        let n = cur.members.len();
        let mut added = false;
        for (i, j) in (0..n).tuple_combinations() {
            let index: BTreeSet<String> = cur.members[i]
                .index
                .intersection(&cur.members[j].index)
                .cloned()
                .collect();
            if index.is_empty() || cur.find(&index).is_some() {
                continue;
            }
            let inter: BTreeSet<usize> = cur.image_set(i).intersection(&cur.image_set(j)).copied().collect();
            if inter.is_empty() {
                return domain(format!("images of {} and {} do not meet", show_index(&cur.members[i].index), show_index(&cur.members[j].index)));
            }
            let (proj, _) = intersection_projection(&cur, i, j, &inter).map_err(|(a, b)| {
                Error::Domain(format!(
                    "not strongly consistent: {} and {} forced together",
                    cur.omega.elements()[a],
                    cur.omega.elements()[b]
                ))
            })?;
            let elems: Vec<usize> = inter.iter().copied().collect();
            let image = FiniteSpace::new(elems.iter().map(|&e| cur.omega.elements()[e].clone()).collect())?;
            let table = proj.iter().map(|p| elems.iter().position(|e| e == p).unwrap()).collect();
            cur = cur.with_member(Member { index, image, table })?;
            added = true;
            break;
        }
        if !added {
            return Ok(cur);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomicReport {
    pub atomics: Vec<Vec<String>>,
    pub has_representation: bool,
    pub representation: Vec<Vec<String>>,
    /// For each atomic member with proper sub-indices: two elements its sub-projections confuse.
    pub atomic_witnesses: Vec<Witness>,
}

/// Atomic members: no proper sub-index, or the sub-projections do not determine the member.
pub fn atomic_analysis(f: &ProjectionFamily) -> Result<AtomicReport> {
    let base = f.base();
    if f.find(&base).is_none() {
        return Err(Error::Precondition(format!("no identity member indexed {}", show_index(&base))));
    }
    let n = f.members.len();
    let w_count = f.omega.len();
    let mut atomic = Vec::new();
    let mut witnesses = Vec::new();
    for a in 0..n {
        let subs: Vec<usize> = (0..n)
            .filter(|&b| b != a && f.members[b].index.is_subset(&f.members[a].index))
            .collect();
        if subs.is_empty() {
            atomic.push(a);
            continue;
        }
        let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut confused = None;
        for w in 0..w_count {
            let key: Vec<usize> = subs.iter().map(|&b| f.members[b].table[w]).collect();
            match seen.get(&key) {
                Some(&v) if f.members[a].table[v] != f.members[a].table[w] => {
                    confused = Some((v, w));
                    break;
                }
                Some(_) => {}
                None => {
                    seen.insert(key, w);
                }
            }
        }
        if let Some((v, w)) = confused {
            atomic.push(a);
            witnesses.push(Witness {
                property: "atomic".into(),
                indices: vec![show_index(&f.members[a].index)],
                elements: vec![f.omega.elements()[v].clone(), f.omega.elements()[w].clone()],
                detail: "equal under every sub-projection, different under this one".into(),
            });
        }
    }
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let injective = (0..w_count).all(|w| seen.insert(atomic.iter().map(|&a| f.members[a].table[w]).collect()));
    let names: Vec<Vec<String>> = atomic
        .iter()
        .map(|&a| f.members[a].index.iter().cloned().collect())
        .collect();
    Ok(AtomicReport {
        atomics: names.clone(),
        has_representation: injective,
        representation: if injective { names } else { Vec::new() },
        atomic_witnesses: witnesses,
    })
}

/// Canonical projections `π_V`, `V` nonempty, on the enumerated graph space (subset mode).
pub fn graph_family(spec: &SpaceSpec) -> Result<ProjectionFamily> {
    let graphs = spec.enumerate(DEFAULT_CAP)?;
    let enc: Vec<String> = graphs.iter().map(|g| g.encode()).collect();
    let omega = FiniteSpace::new(enc.clone())?;
    let n = spec.num_vertices() as u32;
    let mut members = Vec::new();
    for vs in (0..n).powerset().filter(|s| !s.is_empty()) {
        let image_elems: Vec<String> = graphs
            .iter()
            .zip(&enc)
            .filter(|(g, _)| g.vertices().iter().all(|v| vs.contains(v)))
            .map(|(_, e)| e.clone())
            .collect();
        let image = FiniteSpace::new(image_elems)?;
        let table = graphs
            .iter()
            .map(|g| image.position(&g.project(&vs).encode()).expect("projection stays in the space"))
            .collect();
        members.push(Member {
            index: vs.iter().map(|&v| spec.label(v).to_string()).collect(),
            image,
            table,
        });
    }
    ProjectionFamily::new(omega, FamilyMode::Subset, members)
}

/// Coordinate projections `x ↦ x_A`, `A` nonempty, on `∏_i {0, …, d_i − 1}` (substructure mode).
pub fn coordinate_family(dims: &[usize]) -> Result<ProjectionFamily> {
    let points: Vec<Vec<usize>> = dims.iter().map(|&d| 0..d).multi_cartesian_product().collect();
    let points = if dims.is_empty() { vec![Vec::new()] } else { points };
    let omega = FiniteSpace::new(points.iter().map(|p| p.iter().join(",")).collect())?;
    let mut members = Vec::new();
    for a in (0..dims.len()).powerset().filter(|s| !s.is_empty()) {
        let sub = |p: &Vec<usize>| a.iter().map(|&i| format!("{}:{}", i + 1, p[i])).join(",");
        let image_elems: Vec<String> = points.iter().map(sub).unique().collect();
        let image = FiniteSpace::new(image_elems)?;
        let table = points.iter().map(|p| image.position(&sub(p)).unwrap()).collect();
        members.push(Member {
            index: a.iter().map(|i| (i + 1).to_string()).collect(),
            image,
            table,
        });
    }
    ProjectionFamily::new(omega, FamilyMode::Substructure, members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn projection_maps() {
        let omega = FiniteSpace::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let id: BTreeMap<String, String> = omega.elements().iter().map(|e| (e.clone(), e.clone())).collect();
        assert!(is_projection(&id, &omega).unwrap());
        let c: BTreeMap<String, String> = omega.elements().iter().map(|e| (e.clone(), "a".into())).collect();
        assert!(is_projection(&c, &omega).unwrap());
        let swap = BTreeMap::from([("a".into(), "b".into()), ("b".into(), "a".into()), ("c".into(), "c".into())]);
        assert!(!is_projection(&swap, &omega).unwrap());
        let partial = BTreeMap::from([("a".into(), "a".into())]);
        assert!(is_projection(&partial, &omega).is_err());
    }

    #[test]
    fn canonical_graph_family_two_vertices() {
        let f = graph_family(&SpaceSpec::simple(2, 2)).unwrap();
        f.validate().unwrap();
        let r = family_report(&f, BridgeMode::Derived).unwrap();
        assert!(r.consistent && r.strongly_consistent && r.complete, "{:?}", r.witnesses);
        let a = atomic_analysis(&f).unwrap();
        assert_eq!(a.atomics, vec![vec!["1".to_string()], vec!["2".into()], vec!["1".into(), "2".into()]]);
        assert!(a.has_representation);
    }

    #[test]
    fn graph_family_three_vertices() {
        let f = graph_family(&SpaceSpec::simple(3, 2)).unwrap();
        f.validate().unwrap();
        let r = family_report(&f, BridgeMode::Derived).unwrap();
        assert!(r.consistent && r.strongly_consistent && r.complete);
        assert_eq!(r.non_unique_intersections, 0);
        let a = atomic_analysis(&f).unwrap();
        assert_eq!(a.atomics.len(), 6);
        assert!(a.atomics.iter().all(|x| x.len() <= 2));
        // drop π_{2}: {1,2} ∩ {2,3} has no member
        let g = f.without(&set(&["2"])).unwrap();
        let r = family_report(&g, BridgeMode::Derived).unwrap();
        assert!(!r.complete);
        assert!(r
            .witnesses
            .iter()
            .any(|w| w.property == "complete" && w.indices == vec!["{1,2}".to_string(), "{2,3}".into()]));
        let back = augment_with_intersections(&g).unwrap();
        assert!(family_report(&back, BridgeMode::Derived).unwrap().complete);
    }

    #[test]
    fn coordinate_family_cube() {
        let f = coordinate_family(&[2, 2]).unwrap();
        f.validate().unwrap();
        let r = family_report(&f, BridgeMode::Exhaustive { cap: 1 << 20 }).unwrap();
        assert!(r.consistent && r.strongly_consistent && r.complete);
        assert!(r.undetermined.is_empty());
        let f3 = coordinate_family(&[2, 2, 2]).unwrap();
        let a = atomic_analysis(&f3).unwrap();
        assert_eq!(a.atomics, vec![vec!["1".to_string()], vec!["2".into()], vec!["3".into()]]);
        assert!(a.has_representation);
    }

    #[test]
    fn corrupted_table_rejected() {
        let spec = SpaceSpec::simple(3, 2);
        let f = graph_family(&spec).unwrap();
        let graphs = spec.enumerate(DEFAULT_CAP).unwrap();
        let mut members = f.members().to_vec();
        // π_{1,2} sends a graph containing vertex 1 to the lone vertex 2
        let k = members.iter().position(|m| m.index == set(&["1", "2"])).unwrap();
        let w = graphs.iter().position(|g| g.vertices() == [0, 2]).unwrap();
        let target = members[k].image.position(&Graph::from_vertices([1]).encode()).unwrap();
        members[k].table[w] = target;
        let g = ProjectionFamily::new(f.omega().clone(), FamilyMode::Subset, members).unwrap();
        let r = family_report(&g, BridgeMode::Derived).unwrap();
        assert!(!r.consistent);
        assert!(r
            .witnesses
            .iter()
            .any(|x| x.property == "consistent" && x.indices == vec!["{1}".to_string(), "{1,2}".into()]));
    }

    #[test]
    fn identity_only() {
        let f = coordinate_family(&[3]).unwrap();
        let a = atomic_analysis(&f).unwrap();
        assert_eq!(a.atomics, vec![vec!["1".to_string()]]);
        assert_eq!(a.representation, a.atomics);
    }

    #[test]
    fn identity_required() {
        let f = graph_family(&SpaceSpec::simple(2, 2)).unwrap();
        let g = f.without(&set(&["1", "2"])).unwrap();
        assert!(matches!(atomic_analysis(&g), Err(Error::Precondition(_))));
    }

    #[test]
    fn bridge_cap() {
        let f = coordinate_family(&[3, 3, 3]).unwrap();
        assert!(matches!(
            family_report(&f, BridgeMode::Exhaustive { cap: 1000 }),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn json_family() {
        let v = serde_json::json!({
            "omega": ["x", "y"],
            "members": [
                {"index": ["1"], "image": ["x"], "table": {"x": "x", "y": "x"}},
                {"index": ["1", "2"], "image": ["x", "y"], "table": {"x": "x", "y": "y"}}
            ]
        });
        let f = ProjectionFamily::from_json(&v).unwrap();
        assert_eq!(f.mode(), FamilyMode::Subset);
        let r = family_report(&f, BridgeMode::Derived).unwrap();
        assert!(r.consistent && r.complete);
        let bad = serde_json::json!({
            "omega": ["x", "y"],
            "members": [{"index": ["1"], "image": ["x"], "table": {"x": "x"}}]
        });
        assert!(ProjectionFamily::from_json(&bad).is_err());
    }

    #[test]
    fn validation_conditions() {
        // two indices whose images are nested but indices are not
        let v = serde_json::json!({
            "omega": ["x", "y"],
            "members": [
                {"index": ["1"], "image": ["x"], "table": {"x": "x", "y": "x"}},
                {"index": ["2"], "image": ["x", "y"], "table": {"x": "x", "y": "y"}}
            ]
        });
        let f = ProjectionFamily::from_json(&v).unwrap();
        let e = f.validate().unwrap_err().to_string();
        assert!(e.contains("condition"), "{e}");
    }
}
