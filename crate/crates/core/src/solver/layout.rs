use crate::graph::{Problem, VariableKey, VariableKind};
use std::collections::HashMap;
use std::ops::Range;

/// Variable group in the `[C | O | Op | Mp]` ordering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    /// Camera poses.
    C,
    /// Object poses and twists, each pose immediately followed by its twist.
    O,
    /// Object points.
    Op,
    /// Static map points.
    Mp,
}

/// Where a free variable lives in the system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Index into the 6-dof camera/object block list.
    Co(usize),
    /// Index into the 3-dof point block list.
    Point(usize),
}

/// Ordering and offsets of the free variables of a problem.
///
/// Every `C`/`O` variable has 6 dof and every `Op`/`Mp` variable 3, so offsets
/// follow from block indices: `6·i` inside the `CO` part, `N_CO + 3·j` for points.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockLayout {
    co_keys: Vec<VariableKey>,
    point_keys: Vec<VariableKey>,
    n_cameras: usize,
    n_object_points: usize,
    index: HashMap<VariableKey, Slot>,
}

impl BlockLayout {
    /// Lays out the free variables of `p`. Fixed variables are left out entirely.
    pub fn from_problem(p: &Problem) -> Self {
        let mut cameras = Vec::new();
        let mut objects = Vec::new();
        let mut object_points = Vec::new();
        let mut map_points = Vec::new();
        for (key, var) in p.variables() {
            if var.fixed {
                continue;
            }
            match key.kind() {
                VariableKind::CameraPose => cameras.push(*key),
                VariableKind::ObjectPose | VariableKind::ObjectTwist => objects.push(*key),
                VariableKind::ObjectPoint => object_points.push(*key),
                VariableKind::MapPoint => map_points.push(*key),
            }
        }
        // (track, frame, pose-before-twist)
        objects.sort_by_key(|k| (k.track(), k.frame(), k.kind() == VariableKind::ObjectTwist));
        Self::from_groups(cameras, objects, object_points, map_points)
    }

    pub fn from_groups(
        cameras: Vec<VariableKey>,
        objects: Vec<VariableKey>,
        object_points: Vec<VariableKey>,
        map_points: Vec<VariableKey>,
    ) -> Self {
        let n_cameras = cameras.len();
        let n_object_points = object_points.len();
        let co_keys: Vec<_> = cameras.into_iter().chain(objects).collect();
        let point_keys: Vec<_> = object_points.into_iter().chain(map_points).collect();
        let mut index = HashMap::with_capacity(co_keys.len() + point_keys.len());
        for (i, k) in co_keys.iter().enumerate() {
            index.insert(*k, Slot::Co(i));
        }
        for (j, k) in point_keys.iter().enumerate() {
            index.insert(*k, Slot::Point(j));
        }
        BlockLayout { co_keys, point_keys, n_cameras, n_object_points, index }
    }

    pub fn slot(&self, key: &VariableKey) -> Option<Slot> {
        self.index.get(key).copied()
    }

    pub fn co_keys(&self) -> &[VariableKey] {
        &self.co_keys
    }

    pub fn point_keys(&self) -> &[VariableKey] {
        &self.point_keys
    }

    pub fn n_co_blocks(&self) -> usize {
        self.co_keys.len()
    }

    pub fn n_point_blocks(&self) -> usize {
        self.point_keys.len()
    }

    /// `N_CO = N_C + N_O` in scalar dofs.
    pub fn n_co(&self) -> usize {
        6 * self.co_keys.len()
    }

    /// `N_P = N_Op + N_Mp` in scalar dofs.
    pub fn n_p(&self) -> usize {
        3 * self.point_keys.len()
    }

    pub fn dim(&self) -> usize {
        self.n_co() + self.n_p()
    }

    pub fn group_of_co(&self, i: usize) -> Group {
        if i < self.n_cameras {
            Group::C
        } else {
            Group::O
        }
    }

    pub fn group_of_point(&self, j: usize) -> Group {
        if j < self.n_object_points {
            Group::Op
        } else {
            Group::Mp
        }
    }

    pub fn group(&self, slot: Slot) -> Group {
        match slot {
            Slot::Co(i) => self.group_of_co(i),
            Slot::Point(j) => self.group_of_point(j),
        }
    }

    /// Scalar offset of a slot in the full `[x_CO; x_P]` vector.
    pub fn offset(&self, slot: Slot) -> usize {
        match slot {
            Slot::Co(i) => 6 * i,
            Slot::Point(j) => self.n_co() + 3 * j,
        }
    }

    pub fn dof(&self, slot: Slot) -> usize {
        match slot {
            Slot::Co(_) => 6,
            Slot::Point(_) => 3,
        }
    }

    /// Scalar range of each group, in `[C | O | Op | Mp]` order.
    pub fn group_ranges(&self) -> [(Group, Range<usize>); 4] {
        let c = 6 * self.n_cameras;
        let co = self.n_co();
        let op = co + 3 * self.n_object_points;
        [(Group::C, 0..c), (Group::O, c..co), (Group::Op, co..op), (Group::Mp, op..self.dim())]
    }

    /// Slots in system order: `C`, `O`, `Op`, `Mp`.
    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        (0..self.co_keys.len()).map(Slot::Co).chain((0..self.point_keys.len()).map(Slot::Point))
    }

    pub fn key(&self, slot: Slot) -> VariableKey {
        match slot {
            Slot::Co(i) => self.co_keys[i],
            Slot::Point(j) => self.point_keys[j],
        }
    }
}
