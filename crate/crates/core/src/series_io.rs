//! Binary persistence for a whole model series.
//!
//! Layout: an 8-byte magic, a version pair (major/minor), the payload length,
//! the payload, and a SHA-256 checksum of the payload. All integers and
//! 64-bit float bit patterns are little-endian, so a round trip restores
//! every potential table bit-exactly and all query answers are unchanged.
//! Readers reject files with a different major version and report truncated
//! or corrupted payloads through the checksum.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::graph::{EliminationOrder, Heuristic, UGraph};
use crate::jtree::{Clique, JunctionTree, Sepset};
use crate::model::{
    Cpt, DpnModel, Evidence, Finding, ParentRef, SliceSpec, SliceVar, TransitionSpec, VarId,
    Variable,
};
use crate::potential::PotentialTable;
use crate::window::{ArchivedModel, ModelSeries, SmoothedCopy, WindowState};

const MAGIC: &[u8; 8] = b"DPNSERIE";
const MAJOR: u16 = 1;
const MINOR: u16 = 0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SeriesIoError {
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("not a series file (bad magic)")]
    BadMagic,
    #[error("unsupported series format version {found}.x (this build reads {expected}.x)")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("file is corrupt: {0}")]
    Corrupt(String),
}

impl From<std::io::Error> for SeriesIoError {
    fn from(e: std::io::Error) -> Self {
        SeriesIoError::Io(e.to_string())
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }

    fn bool(&mut self, x: bool) {
        self.u8(x as u8);
    }

    fn u32(&mut self, x: u32) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn u64(&mut self, x: u64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn len(&mut self, x: usize) {
        self.u64(x as u64);
    }

    fn f64(&mut self, x: f64) {
        self.u64(x.to_bits());
    }

    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn slice_var(&mut self, v: SliceVar) {
        self.u32(v.t);
        self.u32(v.var.0);
    }

    fn var_set(&mut self, s: &BTreeSet<SliceVar>) {
        self.len(s.len());
        for &v in s {
            self.slice_var(v);
        }
    }

    fn potential(&mut self, p: &PotentialTable) {
        self.len(p.domain().len());
        for &(v, c) in p.domain() {
            self.slice_var(v);
            self.len(c);
        }
        self.len(p.values().len());
        for &x in p.values() {
            self.f64(x);
        }
    }

    fn finding(&mut self, f: &Finding) {
        match f {
            Finding::Hard(s) => {
                self.u8(0);
                self.len(*s);
            }
            Finding::Likelihood(w) => {
                self.u8(1);
                self.len(w.len());
                for &x in w {
                    self.f64(x);
                }
            }
        }
    }

    fn evidence(&mut self, e: &Evidence) {
        self.u32(e.t);
        self.u32(e.var.0);
        self.finding(&e.finding);
    }

    fn cpt(&mut self, c: &Cpt) {
        self.u32(c.child.0);
        self.len(c.parents.len());
        for p in &c.parents {
            self.u32(p.var.0);
            self.u32(p.lag);
        }
        self.len(c.table.len());
        for &x in &c.table {
            self.f64(x);
        }
    }

    fn slice_spec(&mut self, s: &SliceSpec) {
        self.len(s.variables.len());
        for v in &s.variables {
            self.u32(v.0);
        }
        self.len(s.intra_edges.len());
        for &(p, c) in &s.intra_edges {
            self.u32(p.0);
            self.u32(c.0);
        }
        self.len(s.cpts.len());
        for c in &s.cpts {
            self.cpt(c);
        }
    }

    fn model(&mut self, m: &DpnModel) {
        self.len(m.variables.len());
        for v in &m.variables {
            self.str(&v.name);
            self.len(v.states.len());
            for s in &v.states {
                self.str(s);
            }
        }
        self.slice_spec(&m.initial);
        self.slice_spec(&m.transition.slice);
        self.len(m.transition.temporal_edges.len());
        for &(p, c) in &m.transition.temporal_edges {
            self.u32(p.0);
            self.u32(c.0);
        }
    }

    fn graph(&mut self, g: &UGraph) {
        let vs: Vec<SliceVar> = g.vertices().collect();
        self.len(vs.len());
        for &v in &vs {
            self.slice_var(v);
        }
        let es = g.edges();
        self.len(es.len());
        for &(a, b) in &es {
            self.slice_var(a);
            self.slice_var(b);
        }
    }

    fn tree(&mut self, t: &JunctionTree) {
        let cards = t.cards();
        self.len(cards.len());
        for (&v, &c) in cards {
            self.slice_var(v);
            self.len(c);
        }
        self.len(t.cliques().len());
        for c in t.cliques() {
            self.var_set(&c.members);
            self.potential(&c.potential);
        }
        self.len(t.sepsets().len());
        for s in t.sepsets() {
            self.len(s.cliques.0);
            self.len(s.cliques.1);
            self.var_set(&s.members);
            self.potential(&s.potential);
        }
        self.bool(t.is_calibrated());
        self.len(t.journal().len());
        for e in t.journal() {
            self.evidence(e);
        }
    }

    fn heuristic(&mut self, h: &Heuristic) {
        match h {
            Heuristic::MinFill => self.u8(0),
            Heuristic::MinWeight => self.u8(1),
            Heuristic::GivenOrder(o) => {
                self.u8(2);
                self.len(o.sequence().len());
                for &v in o.sequence() {
                    self.slice_var(v);
                }
            }
        }
    }

    fn window(&mut self, w: &WindowState) {
        self.u32(w.t_low);
        self.u32(w.t_high);
        self.graph(&w.moral);
        self.graph(&w.filled);
        self.len(w.order.sequence().len());
        for &v in w.order.sequence() {
            self.slice_var(v);
        }
        match &w.incoming_interface {
            None => self.bool(false),
            Some(i) => {
                self.bool(true);
                self.var_set(i);
            }
        }
        self.tree(&w.tree);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SeriesIoError> {
        if self.pos + n > self.buf.len() {
            return Err(SeriesIoError::Corrupt("unexpected end of payload".into()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, SeriesIoError> {
        Ok(self.take(1)?[0])
    }

    fn bool(&mut self) -> Result<bool, SeriesIoError> {
        Ok(self.u8()? != 0)
    }

    fn u32(&mut self) -> Result<u32, SeriesIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SeriesIoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, SeriesIoError> {
        let x = self.u64()?;
        usize::try_from(x).map_err(|_| SeriesIoError::Corrupt("length overflow".into()))
    }

    fn f64(&mut self) -> Result<f64, SeriesIoError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn str(&mut self) -> Result<String, SeriesIoError> {
        let n = self.len()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| SeriesIoError::Corrupt("invalid utf-8".into()))
    }

    fn slice_var(&mut self) -> Result<SliceVar, SeriesIoError> {
        let t = self.u32()?;
        let var = VarId(self.u32()?);
        Ok(SliceVar::new(t, var))
    }

    fn var_set(&mut self) -> Result<BTreeSet<SliceVar>, SeriesIoError> {
        let n = self.len()?;
        let mut out = BTreeSet::new();
        for _ in 0..n {
            out.insert(self.slice_var()?);
        }
        Ok(out)
    }

    fn potential(&mut self) -> Result<PotentialTable, SeriesIoError> {
        let dn = self.len()?;
        let mut domain = Vec::with_capacity(dn);
        let mut cells = 1usize;
        for _ in 0..dn {
            let v = self.slice_var()?;
            let c = self.len()?;
            cells = cells.saturating_mul(c);
            domain.push((v, c));
        }
        let vn = self.len()?;
        if vn != cells {
            return Err(SeriesIoError::Corrupt("table length mismatch".into()));
        }
        let mut values = Vec::with_capacity(vn);
        for _ in 0..vn {
            values.push(self.f64()?);
        }
        Ok(PotentialTable::new(domain, values))
    }

    fn finding(&mut self) -> Result<Finding, SeriesIoError> {
        match self.u8()? {
            0 => Ok(Finding::Hard(self.len()?)),
            1 => {
                let n = self.len()?;
                let mut w = Vec::with_capacity(n);
                for _ in 0..n {
                    w.push(self.f64()?);
                }
                Ok(Finding::Likelihood(w))
            }
            tag => Err(SeriesIoError::Corrupt(format!("unknown finding tag {tag}"))),
        }
    }

    fn evidence(&mut self) -> Result<Evidence, SeriesIoError> {
        let t = self.u32()?;
        let var = VarId(self.u32()?);
        let finding = self.finding()?;
        Ok(Evidence { t, var, finding })
    }

    fn cpt(&mut self) -> Result<Cpt, SeriesIoError> {
        let child = VarId(self.u32()?);
        let pn = self.len()?;
        let mut parents = Vec::with_capacity(pn);
        for _ in 0..pn {
            let var = VarId(self.u32()?);
            let lag = self.u32()?;
            parents.push(ParentRef { var, lag });
        }
        let tn = self.len()?;
        let mut table = Vec::with_capacity(tn);
        for _ in 0..tn {
            table.push(self.f64()?);
        }
        Ok(Cpt { child, parents, table })
    }

    fn slice_spec(&mut self) -> Result<SliceSpec, SeriesIoError> {
        let vn = self.len()?;
        let mut variables = Vec::with_capacity(vn);
        for _ in 0..vn {
            variables.push(VarId(self.u32()?));
        }
        let en = self.len()?;
        let mut intra_edges = Vec::with_capacity(en);
        for _ in 0..en {
            let p = VarId(self.u32()?);
            let c = VarId(self.u32()?);
            intra_edges.push((p, c));
        }
        let cn = self.len()?;
        let mut cpts = Vec::with_capacity(cn);
        for _ in 0..cn {
            cpts.push(self.cpt()?);
        }
        Ok(SliceSpec { variables, intra_edges, cpts })
    }

    fn model(&mut self) -> Result<DpnModel, SeriesIoError> {
        let vn = self.len()?;
        let mut variables = Vec::with_capacity(vn);
        for _ in 0..vn {
            let name = self.str()?;
            let sn = self.len()?;
            let mut states = Vec::with_capacity(sn);
            for _ in 0..sn {
                states.push(self.str()?);
            }
            variables.push(Variable { name, states });
        }
        let initial = self.slice_spec()?;
        let slice = self.slice_spec()?;
        let tn = self.len()?;
        let mut temporal_edges = Vec::with_capacity(tn);
        for _ in 0..tn {
            let p = VarId(self.u32()?);
            let c = VarId(self.u32()?);
            temporal_edges.push((p, c));
        }
        Ok(DpnModel { variables, initial, transition: TransitionSpec { slice, temporal_edges } })
    }

    fn graph(&mut self) -> Result<UGraph, SeriesIoError> {
        let mut g = UGraph::new();
        let vn = self.len()?;
        for _ in 0..vn {
            g.add_vertex(self.slice_var()?);
        }
        let en = self.len()?;
        for _ in 0..en {
            let a = self.slice_var()?;
            let b = self.slice_var()?;
            g.add_edge(a, b);
        }
        Ok(g)
    }

    fn tree(&mut self) -> Result<JunctionTree, SeriesIoError> {
        let cn = self.len()?;
        let mut cards = BTreeMap::new();
        for _ in 0..cn {
            let v = self.slice_var()?;
            let c = self.len()?;
            cards.insert(v, c);
        }
        let qn = self.len()?;
        let mut cliques = Vec::with_capacity(qn);
        for _ in 0..qn {
            let members = self.var_set()?;
            let potential = self.potential()?;
            cliques.push(Clique { members, potential });
        }
        let sn = self.len()?;
        let mut sepsets = Vec::with_capacity(sn);
        for _ in 0..sn {
            let a = self.len()?;
            let b = self.len()?;
            if a >= qn || b >= qn {
                return Err(SeriesIoError::Corrupt("sepset endpoint out of range".into()));
            }
            let members = self.var_set()?;
            let potential = self.potential()?;
            sepsets.push(Sepset { cliques: (a, b), members, potential });
        }
        let calibrated = self.bool()?;
        let jn = self.len()?;
        let mut journal = Vec::with_capacity(jn);
        for _ in 0..jn {
            journal.push(self.evidence()?);
        }
        let mut tree = JunctionTree::from_parts(cliques, sepsets, cards, calibrated);
        *tree.journal_mut() = journal;
        tree.verify_structure()
            .map_err(|e| SeriesIoError::Corrupt(format!("invalid junction tree: {e}")))?;
        Ok(tree)
    }

    fn heuristic(&mut self) -> Result<Heuristic, SeriesIoError> {
        match self.u8()? {
            0 => Ok(Heuristic::MinFill),
            1 => Ok(Heuristic::MinWeight),
            2 => {
                let n = self.len()?;
                let mut seq = Vec::with_capacity(n);
                for _ in 0..n {
                    seq.push(self.slice_var()?);
                }
                let order = EliminationOrder::new(seq)
                    .map_err(|e| SeriesIoError::Corrupt(format!("bad stored order: {e}")))?;
                Ok(Heuristic::GivenOrder(order))
            }
            tag => Err(SeriesIoError::Corrupt(format!("unknown heuristic tag {tag}"))),
        }
    }

    fn window(&mut self) -> Result<WindowState, SeriesIoError> {
        let t_low = self.u32()?;
        let t_high = self.u32()?;
        let moral = self.graph()?;
        let filled = self.graph()?;
        let on = self.len()?;
        let mut seq = Vec::with_capacity(on);
        for _ in 0..on {
            seq.push(self.slice_var()?);
        }
        let order = EliminationOrder::new(seq)
            .map_err(|e| SeriesIoError::Corrupt(format!("bad stored order: {e}")))?;
        let incoming_interface = if self.bool()? { Some(self.var_set()?) } else { None };
        let tree = self.tree()?;
        Ok(WindowState { tree, t_low, t_high, moral, filled, order, incoming_interface })
    }
}

/// Serializes a series to its framed binary representation.
pub fn to_bytes(series: &ModelSeries) -> Vec<u8> {
    let mut w = Writer::new();
    w.model(&series.model);
    w.heuristic(&series.heuristic);
    w.window(&series.window);
    w.len(series.archived.len());
    for a in &series.archived {
        w.tree(&a.tree);
        w.u32(a.t_low);
        w.u32(a.t_high);
        w.var_set(&a.outgoing_interface);
        match &a.incoming_interface {
            None => w.bool(false),
            Some(i) => {
                w.bool(true);
                w.var_set(i);
            }
        }
        w.u64(a.archived_at_epoch);
    }
    w.len(series.smoothed.len());
    for s in &series.smoothed {
        match s {
            None => w.bool(false),
            Some(copy) => {
                w.bool(true);
                w.tree(&copy.tree);
                w.u64(copy.informed_epoch);
            }
        }
    }
    w.f64(series.evidence_mass);
    w.u64(series.epoch);

    let payload = w.buf;
    let digest = Sha256::digest(&payload);
    let mut out = Vec::with_capacity(payload.len() + 8 + 2 + 2 + 8 + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MAJOR.to_le_bytes());
    out.extend_from_slice(&MINOR.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&digest);
    out
}

/// Restores a series from bytes produced by [`to_bytes`].
pub fn from_bytes(bytes: &[u8]) -> Result<ModelSeries, SeriesIoError> {
    if bytes.len() < 8 + 2 + 2 + 8 {
        return Err(SeriesIoError::Corrupt("file shorter than header".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(SeriesIoError::BadMagic);
    }
    let major = u16::from_le_bytes(bytes[8..10].try_into().unwrap());
    if major != MAJOR {
        return Err(SeriesIoError::VersionMismatch { found: major, expected: MAJOR });
    }
    let payload_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() < payload_len + 32 {
        return Err(SeriesIoError::Corrupt("payload truncated (checksum unverifiable)".into()));
    }
    let payload = &body[..payload_len];
    let stored = &body[payload_len..payload_len + 32];
    let digest = Sha256::digest(payload);
    if digest.as_slice() != stored {
        return Err(SeriesIoError::Corrupt("checksum mismatch".into()));
    }

    let mut r = Reader::new(payload);
    let model = r.model()?;
    let heuristic = r.heuristic()?;
    let window = r.window()?;
    let an = r.len()?;
    let mut archived = Vec::with_capacity(an);
    for _ in 0..an {
        let tree = r.tree()?;
        let t_low = r.u32()?;
        let t_high = r.u32()?;
        let outgoing_interface = r.var_set()?;
        let incoming_interface = if r.bool()? { Some(r.var_set()?) } else { None };
        let archived_at_epoch = r.u64()?;
        archived.push(ArchivedModel {
            tree,
            t_low,
            t_high,
            outgoing_interface,
            incoming_interface,
            archived_at_epoch,
        });
    }
    let sn = r.len()?;
    let mut smoothed = Vec::with_capacity(sn);
    for _ in 0..sn {
        if r.bool()? {
            let tree = r.tree()?;
            let informed_epoch = r.u64()?;
            smoothed.push(Some(SmoothedCopy { tree, informed_epoch }));
        } else {
            smoothed.push(None);
        }
    }
    if smoothed.len() != archived.len() {
        return Err(SeriesIoError::Corrupt("smoothed/archived length mismatch".into()));
    }
    let evidence_mass = r.f64()?;
    let epoch = r.u64()?;
    if r.pos != payload.len() {
        return Err(SeriesIoError::Corrupt("trailing bytes in payload".into()));
    }
    Ok(ModelSeries { model, heuristic, window, archived, smoothed, evidence_mass, epoch })
}

/// Writes a series to a file.
pub fn save_series(series: &ModelSeries, path: impl AsRef<Path>) -> Result<(), SeriesIoError> {
    Ok(std::fs::write(path, to_bytes(series))?)
}

/// Reads a series back from a file.
pub fn load_series(path: impl AsRef<Path>) -> Result<ModelSeries, SeriesIoError> {
    from_bytes(&std::fs::read(path)?)
}
