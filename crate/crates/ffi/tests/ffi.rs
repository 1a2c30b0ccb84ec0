use std::ffi::{c_char, CString};
use std::ptr;

use amga::numerics::Rng;
use amga::zoo::{default_architectures, save_zoo, ModelRecord, ZooConfig};
use amga_ffi::*;

fn small_zoo(dir: &std::path::Path) {
    let mut rng = Rng::new(5);
    let models: Vec<ModelRecord> = default_architectures(16, 5)
        .iter()
        .map(|a| ModelRecord::initialize(a, &mut rng).unwrap())
        .collect();
    save_zoo(dir, &ZooConfig::default(), &models).unwrap();
}

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { amga_last_error(buf.as_mut_ptr().cast::<c_char>(), buf.len()) };
    String::from_utf8_lossy(&buf[..n.min(255)]).into_owned()
}

fn load(dir: &std::path::Path) -> *mut AmgaZoo {
    let path = CString::new(dir.to_str().unwrap()).unwrap();
    let mut zoo = ptr::null_mut();
    assert_eq!(unsafe { amga_zoo_load(path.as_ptr(), &mut zoo) }, AmgaStatus::Ok);
    zoo
}

#[test]
fn load_predict_attack_free() {
    let dir = tempfile::tempdir().unwrap();
    small_zoo(dir.path());
    let zoo = load(dir.path());
    unsafe {
        assert_eq!(amga_zoo_len(zoo), 6);
        let mut shape = [0usize; 3];
        let mut classes = 0usize;
        assert_eq!(amga_zoo_input_shape(zoo, 0, shape.as_mut_ptr(), &mut classes), AmgaStatus::Ok);
        assert_eq!((shape, classes), ([3, 16, 16], 5));

        let mut rng = Rng::new(1);
        let images: Vec<f32> = (0..2 * 768).map(|_| rng.uniform() as f32).collect();
        let mut labels = [9u32; 2];
        assert_eq!(amga_zoo_predict(zoo, 1, images.as_ptr(), 2, labels.as_mut_ptr()), AmgaStatus::Ok);
        assert!(labels.iter().all(|&l| l < 5));

        let cfg = CString::new(r#"{"K": 2, "seed": 3}"#).unwrap();
        let mut attack = ptr::null_mut();
        assert_eq!(amga_attack_run(zoo, cfg.as_ptr(), images.as_ptr(), labels.as_ptr(), 2, &mut attack), AmgaStatus::Ok);
        let n = amga_attack_len(attack);
        assert_eq!(n, images.len());
        let mut adv = vec![0f32; n];
        assert_eq!(amga_attack_adversarial(attack, adv.as_mut_ptr(), n), AmgaStatus::Ok);
        let worst = adv.iter().zip(&images).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(worst > 0.0 && worst <= 8.0 / 255.0 + 1e-7);
        assert_eq!(amga_attack_adversarial(attack, adv.as_mut_ptr(), n - 1), AmgaStatus::InvalidArgument);
        amga_attack_free(attack);
        amga_zoo_free(zoo);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("nothing").to_str().unwrap()).unwrap();
    let mut zoo = ptr::null_mut();
    unsafe {
        assert_eq!(amga_zoo_load(missing.as_ptr(), &mut zoo), AmgaStatus::Io);
        assert!(zoo.is_null());
        assert!(last_error().contains("manifest.json"));
        assert_eq!(amga_zoo_load(ptr::null(), &mut zoo), AmgaStatus::InvalidArgument);
    }
    small_zoo(dir.path());
    let zoo = load(dir.path());
    let images = vec![0.5f32; 768];
    let labels = [0u32];
    let bad = CString::new(r#"{"K": 2, "gamma": 1}"#).unwrap();
    let mut attack = ptr::null_mut();
    unsafe {
        assert_eq!(amga_attack_run(zoo, bad.as_ptr(), images.as_ptr(), labels.as_ptr(), 1, &mut attack), AmgaStatus::Config);
        assert!(last_error().contains("gamma"));
        let mut out = 0usize;
        assert_eq!(amga_zoo_input_shape(zoo, 99, [0usize; 3].as_mut_ptr(), &mut out), AmgaStatus::InvalidArgument);
        amga_zoo_free(zoo);
        amga_zoo_free(ptr::null_mut());
    }
}

#[test]
fn metric_entry_points() {
    let a = AmgaBox { x: 0.0, y: 0.0, w: 10.0, h: 10.0 };
    let b = AmgaBox { x: 5.0, y: 0.0, w: 10.0, h: 10.0 };
    let mut v = 0.0;
    unsafe {
        assert_eq!(amga_iou(a, b, &mut v), AmgaStatus::Ok);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(amga_iou(a, AmgaBox { w: 0.0, ..b }, &mut v), AmgaStatus::Config);

        let x = vec![0.5f32; 3 * 12 * 12];
        let y: Vec<f32> = x.iter().map(|v| v + 1.0 / 255.0).collect();
        assert_eq!(amga_psnr(x.as_ptr(), y.as_ptr(), x.len(), &mut v), AmgaStatus::Ok);
        assert!((v - 20.0 * 255f64.log10()).abs() < 1e-4);
        assert_eq!(amga_psnr(x.as_ptr(), x.as_ptr(), x.len(), &mut v), AmgaStatus::Ok);
        assert!(v.is_infinite());
        assert_eq!(amga_ssim(x.as_ptr(), x.as_ptr(), 3, 12, 12, &mut v), AmgaStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(amga_ssim(x.as_ptr(), x.as_ptr(), 12, 3, 12, &mut v), AmgaStatus::Config);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/amga.h")).unwrap();
    for name in [
        "amga_zoo_load",
        "amga_zoo_free",
        "amga_attack_run",
        "amga_attack_free",
        "amga_last_error",
        "amga_psnr",
        "amga_ssim",
        "amga_iou",
        "AMGA_STATUS_CONFIG = 2",
        "typedef struct AmgaZoo AmgaZoo",
    ] {
        assert!(header.contains(name), "{name}");
    }
    let v = unsafe { std::ffi::CStr::from_ptr(amga_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"amga.h\"\nint main(void) { AmgaBox b = {0, 0, 1, 1}; double v; return amga_iou(b, b, &v) == AMGA_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
