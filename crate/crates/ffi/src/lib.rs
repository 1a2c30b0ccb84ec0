//! C ABI for loading a model zoo, running the attack and scoring images.
//!
//! Every fallible function returns an [`AmgaStatus`]; on failure the
//! message is kept per thread and read with [`amga_last_error`]. Handles
//! are opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use amga::engine::{run_amga, AttackConfig, AttackResult};
use amga::numerics::Tensor;
use amga::track::BBox;
use amga::zoo::{load_zoo, ModelRecord};

/// Status codes; the numeric values match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AmgaStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or out-of-range index.
    InvalidArgument = 1,
    /// Configuration, shape or contract error.
    Config = 2,
    /// File system or file format error.
    Io = 3,
    /// Training or attack produced non-finite values.
    Numeric = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

/// A loaded model zoo.
pub struct AmgaZoo {
    models: Vec<ModelRecord>,
}

/// The outcome of one attack run.
pub struct AmgaAttack {
    result: AttackResult,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmgaBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: AmgaStatus, msg: impl Into<String>) -> AmgaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn from_error(e: amga::Error) -> AmgaStatus {
    let status = match e.exit_code() {
        2 => AmgaStatus::Config,
        3 => AmgaStatus::Io,
        _ => AmgaStatus::Numeric,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> AmgaStatus) -> AmgaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AmgaStatus::Internal, "panic inside the amga library"),
    }
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, AmgaStatus> {
    if p.is_null() {
        return Err(fail(AmgaStatus::InvalidArgument, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AmgaStatus::InvalidArgument, "string is not UTF-8"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn amga_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn amga_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads the zoo written by `zoo-train` from directory `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amga_zoo_load(dir: *const c_char, out: *mut *mut AmgaZoo) -> AmgaStatus {
    guard(|| {
        if out.is_null() {
            return fail(AmgaStatus::InvalidArgument, "null output handle");
        }
        let dir = match c_str(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match load_zoo(Path::new(dir)) {
            Ok((_, models)) => {
                *out = Box::into_raw(Box::new(AmgaZoo { models }));
                AmgaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `zoo` must be null or a handle from [`amga_zoo_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn amga_zoo_free(zoo: *mut AmgaZoo) {
    if !zoo.is_null() {
        drop(Box::from_raw(zoo));
    }
}

/// Number of models in the zoo; 0 for a null handle.
///
/// # Safety
/// `zoo` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn amga_zoo_len(zoo: *const AmgaZoo) -> usize {
    zoo.as_ref().map_or(0, |z| z.models.len())
}

/// Input geometry `[channels, height, width]` and class count of model `index`.
///
/// # Safety
/// `zoo` must be a live handle; `shape` must hold 3 values.
#[no_mangle]
pub unsafe extern "C" fn amga_zoo_input_shape(zoo: *const AmgaZoo, index: usize, shape: *mut usize, n_classes: *mut usize) -> AmgaStatus {
    guard(|| {
        let Some(z) = zoo.as_ref() else {
            return fail(AmgaStatus::InvalidArgument, "null zoo");
        };
        let Some(m) = z.models.get(index) else {
            return fail(AmgaStatus::InvalidArgument, format!("model index {index} out of range"));
        };
        if shape.is_null() || n_classes.is_null() {
            return fail(AmgaStatus::InvalidArgument, "null output");
        }
        for (i, v) in m.arch.input.iter().enumerate() {
            *shape.add(i) = *v;
        }
        *n_classes = m.n_classes();
        AmgaStatus::Ok
    })
}

unsafe fn batch_tensor(zoo: &AmgaZoo, images: *const f32, batch: usize) -> Result<Tensor, AmgaStatus> {
    let m = zoo.models.first().ok_or_else(|| fail(AmgaStatus::Config, "empty zoo"))?;
    if images.is_null() || batch == 0 {
        return Err(fail(AmgaStatus::InvalidArgument, "null or empty image batch"));
    }
    let [c, h, w] = m.arch.input;
    let data = std::slice::from_raw_parts(images, batch * c * h * w).to_vec();
    Tensor::new(vec![batch, c, h, w], data).map_err(from_error)
}

/// Predicted class of model `index` for each image in a `[batch, C, H, W]`
/// row-major buffer.
///
/// # Safety
/// `images` must hold `batch·C·H·W` floats and `labels` `batch` slots.
#[no_mangle]
pub unsafe extern "C" fn amga_zoo_predict(zoo: *const AmgaZoo, index: usize, images: *const f32, batch: usize, labels: *mut u32) -> AmgaStatus {
    guard(|| {
        let Some(z) = zoo.as_ref() else {
            return fail(AmgaStatus::InvalidArgument, "null zoo");
        };
        let Some(m) = z.models.get(index) else {
            return fail(AmgaStatus::InvalidArgument, format!("model index {index} out of range"));
        };
        if labels.is_null() {
            return fail(AmgaStatus::InvalidArgument, "null labels");
        }
        let x = match batch_tensor(z, images, batch) {
            Ok(x) => x,
            Err(s) => return s,
        };
        match m.predict(&x) {
            Ok(p) => {
                for (i, l) in p.into_iter().enumerate() {
                    *labels.add(i) = l as u32;
                }
                AmgaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Runs the attack on a labelled batch. `config_json` may be null for the
/// defaults; otherwise it is a JSON object of attack settings.
///
/// # Safety
/// Buffers as for [`amga_zoo_predict`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amga_attack_run(
    zoo: *const AmgaZoo,
    config_json: *const c_char,
    images: *const f32,
    labels: *const u32,
    batch: usize,
    out: *mut *mut AmgaAttack,
) -> AmgaStatus {
    guard(|| {
        let Some(z) = zoo.as_ref() else {
            return fail(AmgaStatus::InvalidArgument, "null zoo");
        };
        if out.is_null() || labels.is_null() {
            return fail(AmgaStatus::InvalidArgument, "null labels or output handle");
        }
        let config = if config_json.is_null() {
            AttackConfig::default()
        } else {
            let text = match c_str(config_json) {
                Ok(t) => t,
                Err(s) => return s,
            };
            match amga::cli::parse_config::<AttackConfig>(text, Path::new("config_json")) {
                Ok(c) => c,
                Err(e) => return from_error(e),
            }
        };
        let x = match batch_tensor(z, images, batch) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let y: Vec<usize> = std::slice::from_raw_parts(labels, batch).iter().map(|&l| l as usize).collect();
        match run_amga(&x, &y, &z.models, &config) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(AmgaAttack { result }));
                AmgaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of floats in the adversarial batch.
///
/// # Safety
/// `attack` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn amga_attack_len(attack: *const AmgaAttack) -> usize {
    attack.as_ref().map_or(0, |a| a.result.adversarial_example.len())
}

/// Copies the adversarial batch into `out`, which must hold exactly
/// [`amga_attack_len`] floats.
///
/// # Safety
/// `attack` must be live; `out` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn amga_attack_adversarial(attack: *const AmgaAttack, out: *mut f32, len: usize) -> AmgaStatus {
    guard(|| {
        let Some(a) = attack.as_ref() else {
            return fail(AmgaStatus::InvalidArgument, "null attack");
        };
        let data = a.result.adversarial_example.data();
        if out.is_null() || len != data.len() {
            return fail(AmgaStatus::InvalidArgument, format!("buffer must hold {} floats", data.len()));
        }
        std::ptr::copy_nonoverlapping(data.as_ptr(), out, len);
        AmgaStatus::Ok
    })
}

/// # Safety
/// `attack` must be null or a handle from [`amga_attack_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn amga_attack_free(attack: *mut AmgaAttack) {
    if !attack.is_null() {
        drop(Box::from_raw(attack));
    }
}

unsafe fn image_pair(a: *const f32, b: *const f32, shape: &[usize]) -> Result<(Tensor, Tensor), AmgaStatus> {
    if a.is_null() || b.is_null() {
        return Err(fail(AmgaStatus::InvalidArgument, "null image"));
    }
    let n: usize = shape.iter().product();
    let ta = Tensor::new(shape.to_vec(), std::slice::from_raw_parts(a, n).to_vec()).map_err(from_error)?;
    let tb = Tensor::new(shape.to_vec(), std::slice::from_raw_parts(b, n).to_vec()).map_err(from_error)?;
    Ok((ta, tb))
}

/// PSNR in dB (peak 1) of two `len`-float images; `INFINITY` when equal.
///
/// # Safety
/// `a` and `b` must hold `len` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amga_psnr(a: *const f32, b: *const f32, len: usize, out: *mut f64) -> AmgaStatus {
    guard(|| {
        if out.is_null() {
            return fail(AmgaStatus::InvalidArgument, "null output");
        }
        match image_pair(a, b, &[len]).and_then(|(x, y)| amga::quality::psnr(&x, &y).map_err(from_error)) {
            Ok(v) => {
                *out = v;
                AmgaStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Mean SSIM of two `[channels, height, width]` images.
///
/// # Safety
/// `a` and `b` must hold `channels·height·width` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amga_ssim(a: *const f32, b: *const f32, channels: usize, height: usize, width: usize, out: *mut f64) -> AmgaStatus {
    guard(|| {
        if out.is_null() {
            return fail(AmgaStatus::InvalidArgument, "null output");
        }
        match image_pair(a, b, &[channels, height, width]).and_then(|(x, y)| amga::quality::ssim(&x, &y).map_err(from_error)) {
            Ok(v) => {
                *out = v;
                AmgaStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Intersection over union of two boxes; degenerate boxes are errors.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn amga_iou(a: AmgaBox, b: AmgaBox, out: *mut f64) -> AmgaStatus {
    guard(|| {
        if out.is_null() {
            return fail(AmgaStatus::InvalidArgument, "null output");
        }
        let make = |v: AmgaBox| BBox::new(v.x, v.y, v.w, v.h);
        match make(a).and_then(|p| make(b).map(|q| p.iou(&q))) {
            Ok(v) => {
                *out = v;
                AmgaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
