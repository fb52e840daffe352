//! C ABI over fusion, projection and quality scoring.
//!
//! Every fallible call returns a [`SemprojStatus`]; on failure the message is
//! available from [`semproj_last_error`] on the same thread. Layouts are
//! opaque handles released with [`semproj_layout_free`]; strings returned by
//! the library are released with [`semproj_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};
use ndarray::ArrayView2;
use semproj::fusion::FusionInputs;
use semproj::gateway::GuidingPrompt;
use semproj::projector::{pairwise_distances, project_points, DistanceMatrix};
use semproj::quality::report_from_distances;
use semproj::store::{EmbeddingKind, EmbeddingRecord, SampleId};
use semproj::{Layout2D, ProjectorMethod, ProjectorSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemprojStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    FusionFailed = 3,
    ProjectionFailed = 4,
    MetricsFailed = 5,
    PromptFailed = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemprojMethod {
    Pca = 0,
    Mds = 1,
    Isomap = 2,
    Tsne = 3,
}

impl From<SemprojMethod> for ProjectorMethod {
    fn from(m: SemprojMethod) -> Self {
        match m {
            SemprojMethod::Pca => ProjectorMethod::Pca,
            SemprojMethod::Mds => ProjectorMethod::Mds,
            SemprojMethod::Isomap => ProjectorMethod::Isomap,
            SemprojMethod::Tsne => ProjectorMethod::Tsne,
        }
    }
}

/// Projection options. Zero values select the defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SemprojProjectOptions {
    pub method: SemprojMethod,
    pub seed: u64,
    pub perplexity: f64,
    pub iterations: size_t,
    pub k_neighbors: size_t,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SemprojMetrics {
    pub trustworthiness: f64,
    pub continuity: f64,
    pub shepard_rho: f64,
    pub silhouette: f64,
    pub k: size_t,
}

/// Opaque 2D layout.
pub struct SemprojLayout {
    inner: Layout2D,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SemprojStatus, msg: impl std::fmt::Display) -> SemprojStatus {
    set_error(msg.to_string());
    status
}

fn guarded(f: impl FnOnce() -> SemprojStatus) -> SemprojStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SemprojStatus::Panic, "internal panic"),
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn semproj_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn semproj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `ptr` must be non-null and point to `len` readable values.
unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> &'a [T] {
    if len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(ptr, len)
    }
}

fn rows_to_records(values: &[f32], n: usize, dim: usize, kind: EmbeddingKind) -> Vec<EmbeddingRecord> {
    values
        .chunks_exact(dim)
        .take(n)
        .enumerate()
        .map(|(i, v)| EmbeddingRecord {
            sample_id: SampleId::from(format!("row{i}")),
            kind,
            model_tag: "ffi".into(),
            vector: v.to_vec(),
            prompt_hash: None,
            alpha: None,
        })
        .collect()
}

/// Blends row-major `n × dim` data and label matrices into `out`
/// (`n × dim` doubles): `out = alpha·x + (1 − alpha)·y`, with rows
/// L2-normalized first when `normalize` is set.
///
/// # Safety
/// `data` and `labels` must point to `n·dim` floats and `out` to `n·dim`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn semproj_fuse(
    data: *const f32,
    labels: *const f32,
    n: size_t,
    dim: size_t,
    alpha: f64,
    normalize: bool,
    out: *mut f64,
) -> SemprojStatus {
    guarded(|| {
        if data.is_null() || labels.is_null() || out.is_null() {
            return fail(SemprojStatus::NullPointer, "null pointer argument");
        }
        if n == 0 || dim == 0 {
            return fail(SemprojStatus::InvalidArgument, "n and dim must be positive");
        }
        let Some(len) = n.checked_mul(dim) else {
            return fail(SemprojStatus::InvalidArgument, "n·dim overflows");
        };
        let x = rows_to_records(slice(data, len), n, dim, EmbeddingKind::Data);
        let y = rows_to_records(slice(labels, len), n, dim, EmbeddingKind::Label);
        let cfg = semproj::FusionConfig {
            alpha,
            normalize_inputs: normalize,
            renormalize_output: false,
        };
        let fused = match FusionInputs::new(&x, &y, &cfg).and_then(|i| i.blend(alpha)) {
            Ok(f) => f,
            Err(e) => return fail(SemprojStatus::FusionFailed, e),
        };
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, s) in dst.iter_mut().zip(fused.vectors.iter()) {
            *d = *s;
        }
        SemprojStatus::Ok
    })
}

fn view(x: &[f64], n: usize, dim: usize) -> Result<ArrayView2<'_, f64>, SemprojStatus> {
    ArrayView2::from_shape((n, dim), x).map_err(|e| fail(SemprojStatus::InvalidArgument, e))
}

/// Projects row-major `n × dim` points to 2D. On success `*out` receives a
/// new layout handle.
///
/// # Safety
/// `x` must point to `n·dim` doubles, `options` to a valid struct and `out`
/// to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn semproj_project(
    x: *const f64,
    n: size_t,
    dim: size_t,
    options: *const SemprojProjectOptions,
    out: *mut *mut SemprojLayout,
) -> SemprojStatus {
    guarded(|| {
        if x.is_null() || options.is_null() || out.is_null() {
            return fail(SemprojStatus::NullPointer, "null pointer argument");
        }
        *out = ptr::null_mut();
        let Some(len) = n.checked_mul(dim) else {
            return fail(SemprojStatus::InvalidArgument, "n·dim overflows");
        };
        let opts = *options;
        let mut spec = ProjectorSpec::new(opts.method.into());
        spec.seed = opts.seed;
        if opts.perplexity > 0.0 {
            spec.perplexity = Some(opts.perplexity);
        }
        if opts.iterations > 0 {
            spec.iterations = opts.iterations;
        }
        if opts.k_neighbors > 0 {
            spec.k_neighbors = opts.k_neighbors;
        }
        let x = match view(slice(x, len), n, dim) {
            Ok(v) => v,
            Err(s) => return s,
        };
        match project_points(x, &spec, None) {
            Ok(layout) => {
                *out = Box::into_raw(Box::new(SemprojLayout { inner: layout }));
                SemprojStatus::Ok
            }
            Err(e) => fail(SemprojStatus::ProjectionFailed, e),
        }
    })
}

/// Number of points in a layout (0 for NULL).
///
/// # Safety
/// `layout` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semproj_layout_len(layout: *const SemprojLayout) -> size_t {
    layout.as_ref().map_or(0, |l| l.inner.n)
}

/// Whether the projector reported convergence (false for NULL).
///
/// # Safety
/// `layout` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semproj_layout_converged(layout: *const SemprojLayout) -> bool {
    layout.as_ref().is_some_and(|l| l.inner.converged)
}

/// Copies the layout's coordinates into `out` as `x0, y0, x1, y1, …`;
/// `capacity` counts doubles and must be at least `2·len`.
///
/// # Safety
/// `layout` must be a live handle and `out` must point to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn semproj_layout_points(
    layout: *const SemprojLayout,
    out: *mut f64,
    capacity: size_t,
) -> SemprojStatus {
    guarded(|| {
        let (Some(l), false) = (layout.as_ref(), out.is_null()) else {
            return fail(SemprojStatus::NullPointer, "null pointer argument");
        };
        let need = 2 * l.inner.n;
        if capacity < need {
            return fail(SemprojStatus::BufferTooSmall, format!("need {need} doubles, got {capacity}"));
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (d, p) in dst.chunks_exact_mut(2).zip(&l.inner.points) {
            d.copy_from_slice(p);
        }
        SemprojStatus::Ok
    })
}

/// Releases a layout handle. NULL is ignored.
///
/// # Safety
/// `layout` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semproj_layout_free(layout: *mut SemprojLayout) {
    if !layout.is_null() {
        drop(Box::from_raw(layout));
    }
}

/// Trustworthiness, continuity, Shepard correlation and silhouette of
/// `layout` against the row-major `n × dim` points `x`, with integer class
/// `labels` (one per point) and neighborhood size `k`.
///
/// # Safety
/// `x` must point to `n·dim` doubles, `labels` to `n` ints, `layout` must be
/// a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semproj_metrics(
    x: *const f64,
    n: size_t,
    dim: size_t,
    layout: *const SemprojLayout,
    labels: *const i32,
    k: size_t,
    out: *mut SemprojMetrics,
) -> SemprojStatus {
    guarded(|| {
        if x.is_null() || labels.is_null() || out.is_null() {
            return fail(SemprojStatus::NullPointer, "null pointer argument");
        }
        let Some(l) = layout.as_ref() else {
            return fail(SemprojStatus::NullPointer, "null layout");
        };
        if l.inner.n != n {
            return fail(
                SemprojStatus::InvalidArgument,
                format!("layout has {} points, data {n}", l.inner.n),
            );
        }
        let Some(len) = n.checked_mul(dim) else {
            return fail(SemprojStatus::InvalidArgument, "n·dim overflows");
        };
        let dh = match view(slice(x, len), n, dim).map(pairwise_distances) {
            Ok(Ok(d)) => d,
            Ok(Err(e)) => return fail(SemprojStatus::InvalidArgument, e),
            Err(s) => return s,
        };
        let dl = DistanceMatrix::from_points_2d(&l.inner.points);
        match report_from_distances(&dh, &dl, slice(labels, n), "labels", k) {
            Ok(r) => {
                *out = SemprojMetrics {
                    trustworthiness: r.trustworthiness,
                    continuity: r.continuity,
                    shepard_rho: r.shepard_rho,
                    silhouette: r.silhouette,
                    k: r.k,
                };
                SemprojStatus::Ok
            }
            Err(e) => fail(SemprojStatus::MetricsFailed, e),
        }
    })
}

/// Renders a built-in guiding prompt. On success `*out` receives a string
/// to release with [`semproj_string_free`].
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semproj_prompt_render(name: *const c_char, out: *mut *mut c_char) -> SemprojStatus {
    guarded(|| {
        if name.is_null() || out.is_null() {
            return fail(SemprojStatus::NullPointer, "null pointer argument");
        }
        *out = ptr::null_mut();
        let Ok(name) = CStr::from_ptr(name).to_str() else {
            return fail(SemprojStatus::InvalidArgument, "name is not UTF-8");
        };
        match GuidingPrompt::builtin(name) {
            Ok(p) => match CString::new(p.render()) {
                Ok(c) => {
                    *out = c.into_raw();
                    SemprojStatus::Ok
                }
                Err(e) => fail(SemprojStatus::PromptFailed, e),
            },
            Err(e) => fail(SemprojStatus::PromptFailed, e),
        }
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semproj_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
