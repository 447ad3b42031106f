//! C ABI for the cuter library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`,
//! `*_read_*` or a computing function, and released with the matching
//! `*_free`. Every fallible function returns a [`CuterStatus`]; on failure
//! the message is kept per thread and read with
//! [`cuter_last_error_message`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use cuter::assessor::average_fiedler;
use cuter::driver::{run_mocl, RunConfig};
use cuter::io::{read_fpm1, write_fpm1};
use cuter::patchgraph::{build_adjacency, fiedler_value, Bandwidth, FeatureMap, KernelKind, KernelSpec, LaplacianKind};
use cuter::spectral_cut::{maskcut, CutResult};
use cuter::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CuterStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CuterKernelKind {
    Gaussian = 0,
    CosineContinuous = 1,
    CosineBinarized = 2,
}

/// Similarity kernel. A `sigma` of zero or less selects the median
/// heuristic.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuterKernel {
    pub kind: CuterKernelKind,
    pub sigma: f64,
    pub tau_sim: f64,
    pub epsilon_floor: f64,
}

/// Inclusive patch-coordinate box.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CuterBox {
    pub h1: u32,
    pub w1: u32,
    pub h2: u32,
    pub w2: u32,
}

/// Opaque patch feature map.
pub struct CuterFeatureMap(FeatureMap);

/// Opaque MaskCut result.
pub struct CuterCutResult(CutResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CuterStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config { .. } | Error::Shape(_) | Error::EmptyRegion | Error::SizeLimit { .. } => {
                CuterStatus::InvalidArgument
            }
            Error::Format { .. } | Error::Json(_) => CuterStatus::Format,
            Error::Io(_) => CuterStatus::Io,
            _ => CuterStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CuterStatus::NullPointer, format!("{what} is null"))
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CuterStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CuterStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            CuterStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CuterStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn kernel_arg(k: *const CuterKernel) -> Result<KernelSpec, Failure> {
    let k = k.as_ref().ok_or_else(|| null("kernel"))?;
    let spec = KernelSpec {
        kind: match k.kind {
            CuterKernelKind::Gaussian => KernelKind::Gaussian,
            CuterKernelKind::CosineContinuous => KernelKind::CosineContinuous,
            CuterKernelKind::CosineBinarized => KernelKind::CosineBinarized,
        },
        sigma: if k.sigma > 0.0 {
            Bandwidth::Fixed(k.sigma)
        } else {
            Bandwidth::MedianHeuristic
        },
        tau_sim: k.tau_sim,
        epsilon_floor: k.epsilon_floor,
    };
    spec.validate()?;
    Ok(spec)
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cuter_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// plus one, or 0 when there is no message.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cuter_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Gaussian kernel with the median-heuristic bandwidth.
#[no_mangle]
pub extern "C" fn cuter_kernel_default() -> CuterKernel {
    let d = KernelSpec::default();
    CuterKernel {
        kind: CuterKernelKind::Gaussian,
        sigma: 0.0,
        tau_sim: d.tau_sim,
        epsilon_floor: d.epsilon_floor,
    }
}

/// Copies `len = grid_h * grid_w * dim` values in patch-major order.
///
/// # Safety
/// `data` must be valid for `len` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn cuter_feature_map_new(
    grid_h: usize,
    grid_w: usize,
    dim: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut CuterFeatureMap,
) -> CuterStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let values = slice::from_raw_parts(data, len).to_vec();
        let fm = FeatureMap::new(grid_h, grid_w, dim, values)?;
        *out = Box::into_raw(Box::new(CuterFeatureMap(fm)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn cuter_feature_map_read_fpm1(path: *const c_char, out: *mut *mut CuterFeatureMap) -> CuterStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let fm = read_fpm1(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(CuterFeatureMap(fm)));
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cuter_feature_map_write_fpm1(map: *const CuterFeatureMap, path: *const c_char) -> CuterStatus {
    guard(|| {
        let fm = map.as_ref().ok_or_else(|| null("map"))?;
        write_fpm1(Path::new(str_arg(path, "path")?), &fm.0)?;
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cuter_feature_map_shape(
    map: *const CuterFeatureMap,
    grid_h: *mut usize,
    grid_w: *mut usize,
    dim: *mut usize,
) -> CuterStatus {
    guard(|| {
        let fm = &map.as_ref().ok_or_else(|| null("map"))?.0;
        *out_arg(grid_h, "grid_h")? = fm.grid_h();
        *out_arg(grid_w, "grid_w")? = fm.grid_w();
        *out_arg(dim, "dim")? = fm.dim();
        Ok(())
    })
}

/// # Safety
/// `map` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cuter_feature_map_free(map: *mut CuterFeatureMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Second smallest eigenvalue of `D - A` for the map's patch graph.
///
/// # Safety
/// `map` must come from this library; `kernel` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cuter_fiedler_value(
    map: *const CuterFeatureMap,
    kernel: *const CuterKernel,
    out: *mut f64,
) -> CuterStatus {
    guard(|| {
        let fm = &map.as_ref().ok_or_else(|| null("map"))?.0;
        let k = kernel_arg(kernel)?;
        let out = out_arg(out, "out")?;
        *out = fiedler_value(&build_adjacency(fm, &k)?, LaplacianKind::Unnormalized)?;
        Ok(())
    })
}

/// Mean Fiedler value over `count` maps; maps whose graph cannot be built
/// are skipped.
///
/// # Safety
/// `maps` must point to `count` handles from this library.
#[no_mangle]
pub unsafe extern "C" fn cuter_average_fiedler(
    maps: *const *const CuterFeatureMap,
    count: usize,
    kernel: *const CuterKernel,
    out: *mut f64,
) -> CuterStatus {
    guard(|| {
        if maps.is_null() {
            return Err(null("maps"));
        }
        let k = kernel_arg(kernel)?;
        let out = out_arg(out, "out")?;
        let fms = slice::from_raw_parts(maps, count)
            .iter()
            .map(|m| m.as_ref().map(|m| m.0.clone()).ok_or_else(|| null("map entry")))
            .collect::<Result<Vec<_>, _>>()?;
        *out = average_fiedler("ffi", &fms, &k)?.mean_fiedler;
        Ok(())
    })
}

/// # Safety
/// `map` must come from this library; `kernel` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cuter_maskcut(
    map: *const CuterFeatureMap,
    kernel: *const CuterKernel,
    n_iters: usize,
    out: *mut *mut CuterCutResult,
) -> CuterStatus {
    guard(|| {
        let fm = &map.as_ref().ok_or_else(|| null("map"))?.0;
        let k = kernel_arg(kernel)?;
        let out = out_arg(out, "out")?;
        let r = maskcut(fm, &k, n_iters)?;
        *out = Box::into_raw(Box::new(CuterCutResult(r)));
        Ok(())
    })
}

/// Number of iterations in a cut result; 0 for a null handle.
///
/// # Safety
/// `result` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cuter_cut_result_len(result: *const CuterCutResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.iterations.len())
}

/// Box and NCut energy of iteration `index`.
///
/// # Safety
/// `result` must come from this library; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn cuter_cut_result_get(
    result: *const CuterCutResult,
    index: usize,
    bbox: *mut CuterBox,
    energy: *mut f64,
) -> CuterStatus {
    guard(|| {
        let r = &result.as_ref().ok_or_else(|| null("result"))?.0;
        let it = r.iterations.get(index).ok_or_else(|| {
            Failure(
                CuterStatus::InvalidArgument,
                format!("index {index} out of range for {} iterations", r.iterations.len()),
            )
        })?;
        let b = it.bbox;
        *out_arg(bbox, "bbox")? = CuterBox {
            h1: b.h1 as u32,
            w1: b.w1 as u32,
            h2: b.h2 as u32,
            w2: b.w2 as u32,
        };
        *out_arg(energy, "energy")? = it.energy;
        Ok(())
    })
}

/// # Safety
/// `result` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn cuter_cut_result_free(result: *mut CuterCutResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Runs one continual learning simulation and writes its artifacts to
/// `out_dir`. A null `config_json` uses the defaults.
///
/// # Safety
/// `config_json` must be null or NUL-terminated; `out_dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cuter_simulate(config_json: *const c_char, out_dir: *const c_char) -> CuterStatus {
    guard(|| {
        let cfg = if config_json.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_json(str_arg(config_json, "config_json")?)?
        };
        let dir = str_arg(out_dir, "out_dir")?;
        run_mocl(&cfg)?.write(Path::new(dir))?;
        Ok(())
    })
}
