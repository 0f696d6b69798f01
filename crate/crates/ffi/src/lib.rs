//! C ABI over `vortex-core`: opaque encoder and network handles, integer
//! status codes and a thread-local error message.
//!
//! Every function returns a [`VortexStatus`]; on anything other than
//! `VORTEX_STATUS_OK`, `vortex_last_error()` describes the failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ndarray::ArrayView2;
use vortex_core::encoders::{Encoder, EncoderSpec, Exposure, Readout};
use vortex_core::optics::{OpticalConfig, IMAGE_N};
use vortex_core::sensor::CameraModel;
use vortex_core::smallbrain::{Activation, DenseNet};
use vortex_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VortexStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericError = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VortexEncoderKind {
    Plain = 0,
    Vortex = 1,
    Random = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VortexActivation {
    Linear = 0,
    Sigmoid = 1,
}

/// Encoder plus its camera readout settings.
pub struct VortexEncoder {
    encoder: Encoder,
    readout: Readout,
}

/// Two-layer reconstruction network.
pub struct VortexNet {
    net: DenseNet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VortexStatus {
    match e.exit_code() {
        3 => VortexStatus::NumericError,
        1 => VortexStatus::InvalidArgument,
        _ => match e {
            Error::Config(_) | Error::Geometry(_) | Error::Encoder(_) | Error::Camera(_) | Error::Dimension { .. } => {
                VortexStatus::InvalidArgument
            }
            _ => VortexStatus::DataError,
        },
    }
}

struct Fail(VortexStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VortexStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VortexStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VortexStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VortexStatus::Panic
        }
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Fail(VortexStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vortex_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vortex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an encoder with the default optical configuration.
/// `charges` is read only for `VORTEX_ENCODER_KIND_VORTEX`, `seed` only for
/// `VORTEX_ENCODER_KIND_RANDOM`. The readout starts noiseless.
///
/// # Safety
/// `charges` must point to `n_charges` doubles (or be NULL when unused);
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn vortex_encoder_new(
    kind: VortexEncoderKind,
    charges: *const f64,
    n_charges: usize,
    seed: u64,
    out: *mut *mut VortexEncoder,
) -> VortexStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = match kind {
            VortexEncoderKind::Plain => EncoderSpec::plain(),
            VortexEncoderKind::Random => EncoderSpec::random(seed),
            VortexEncoderKind::Vortex => {
                if charges.is_null() || n_charges == 0 {
                    return Err(Fail(VortexStatus::InvalidArgument, "vortex encoder needs at least one charge".into()));
                }
                EncoderSpec::vortex(std::slice::from_raw_parts(charges, n_charges))
            }
        };
        let encoder = Encoder::new(&spec, &OpticalConfig::default())?;
        store(out, VortexEncoder { encoder, readout: Readout::default() });
        Ok(())
    })
}

/// # Safety
/// `enc` must be NULL or a handle from `vortex_encoder_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vortex_encoder_free(enc: *mut VortexEncoder) {
    if !enc.is_null() {
        drop(Box::from_raw(enc));
    }
}

/// Length of one encoded sample (frames × 28 × 28), or 0 for NULL.
///
/// # Safety
/// `enc` must be NULL or a live encoder handle.
#[no_mangle]
pub unsafe extern "C" fn vortex_encoder_output_len(enc: *const VortexEncoder) -> usize {
    enc.as_ref().map_or(0, |e| e.encoder.spec().input_dim())
}

/// Sets camera noise. A non-finite `target_psnr_db` selects noiseless readout;
/// otherwise the exposure of each frame is solved for that PSNR.
///
/// # Safety
/// `enc` must be a live encoder handle.
#[no_mangle]
pub unsafe extern "C" fn vortex_encoder_set_noise(
    enc: *mut VortexEncoder,
    target_psnr_db: f64,
    dark_var: f64,
    seed: u64,
) -> VortexStatus {
    guard(|| {
        let enc = enc.as_mut().ok_or_else(|| null("encoder"))?;
        let camera = CameraModel { dark_var, rng_seed: seed, ..CameraModel::default() };
        camera.validate()?;
        let exposure =
            if target_psnr_db.is_finite() { Exposure::TargetPsnr(target_psnr_db) } else { Exposure::Noiseless };
        enc.readout = Readout { camera, exposure, ..enc.readout };
        Ok(())
    })
}

/// Encodes one 28×28 row-major image with values in [0, 1]. `index` selects
/// the noise stream. `out` receives `vortex_encoder_output_len` values.
///
/// # Safety
/// `image` must point to 784 doubles and `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vortex_encoder_encode(
    enc: *const VortexEncoder,
    image: *const f64,
    index: u64,
    out: *mut f64,
    out_len: usize,
) -> VortexStatus {
    guard(|| {
        let enc = enc.as_ref().ok_or_else(|| null("encoder"))?;
        if image.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let need = enc.encoder.spec().input_dim();
        if out_len != need {
            return Err(Error::Dimension { expected: need, got: out_len }.into());
        }
        let img = ArrayView2::from_shape_ptr((IMAGE_N, IMAGE_N), image);
        let sample = enc.encoder.encode(img, &enc.readout, index)?;
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(&sample.y);
        Ok(())
    })
}

fn activation(a: VortexActivation) -> Activation {
    match a {
        VortexActivation::Linear => Activation::Linear,
        VortexActivation::Sigmoid => Activation::Sigmoid,
    }
}

/// Creates a freshly initialized network.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn vortex_net_new(
    input_dim: usize,
    hidden: usize,
    output_dim: usize,
    act_hidden: VortexActivation,
    act_out: VortexActivation,
    seed: u64,
    out: *mut *mut VortexNet,
) -> VortexStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let net = DenseNet::init(input_dim, hidden, output_dim, (activation(act_hidden), activation(act_out)), seed)?;
        store(out, VortexNet { net });
        Ok(())
    })
}

/// Loads a VNET checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vortex_net_load(path: *const c_char, out: *mut *mut VortexNet) -> VortexStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let net = DenseNet::load(path_arg(path)?)?;
        store(out, VortexNet { net });
        Ok(())
    })
}

/// Writes a VNET checkpoint.
///
/// # Safety
/// `net` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vortex_net_save(net: *const VortexNet, path: *const c_char) -> VortexStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        net.net.save(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `net` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vortex_net_free(net: *mut VortexNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vortex_net_input_dim(net: *const VortexNet) -> usize {
    net.as_ref().map_or(0, |n| n.net.input_dim())
}

/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vortex_net_output_dim(net: *const VortexNet) -> usize {
    net.as_ref().map_or(0, |n| n.net.output_dim())
}

/// Runs `rows` row-major input vectors through the network.
///
/// # Safety
/// `inputs` must hold `rows × input_dim` doubles and `out` must have room for
/// `rows × output_dim`.
#[no_mangle]
pub unsafe extern "C" fn vortex_net_infer(
    net: *const VortexNet,
    inputs: *const f64,
    rows: usize,
    out: *mut f64,
) -> VortexStatus {
    guard(|| {
        let net = &net.as_ref().ok_or_else(|| null("net"))?.net;
        if rows == 0 {
            return Ok(());
        }
        if inputs.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let inputs = std::slice::from_raw_parts(inputs, rows * net.input_dim());
        let out = std::slice::from_raw_parts_mut(out, rows * net.output_dim());
        net.infer_into(inputs, rows, out)?;
        Ok(())
    })
}
