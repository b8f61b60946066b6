use std::ffi::{CStr, CString};
use std::ptr;

use moiso_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(moiso_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn calibrated() -> *mut MoisoDevice {
    let targets = moiso_targets_default();
    let mut dev = ptr::null_mut();
    assert_eq!(unsafe { moiso_device_calibrate(&targets, &mut dev) }, MoisoStatus::Ok);
    assert!(!dev.is_null());
    dev
}

#[test]
fn calibrated_device_isolates_at_the_peak() {
    let dev = calibrated();
    let mut iso = 0.0;
    assert_eq!(
        unsafe { moiso_isolation_db(dev, 1544.1, 1.0, 1, 2, &mut iso) },
        MoisoStatus::Ok
    );
    assert!((iso - 25.0).abs() < 1.0, "{iso}");

    let w = [1540.0, 1544.1, 1550.0];
    let (mut fwd, mut bwd) = ([0.0; 3], [0.0; 3]);
    let s = unsafe { moiso_spectrum(dev, w.as_ptr(), 3, 1.0, 1, 2, fwd.as_mut_ptr(), bwd.as_mut_ptr()) };
    assert_eq!(s, MoisoStatus::Ok);
    assert!(((fwd[1] - bwd[1]) - iso).abs() < 1e-9);

    let mut p = 0.0;
    assert_eq!(
        unsafe { moiso_pair_power(dev, 1550.0, 1.0, 1, 2, &mut p) },
        MoisoStatus::Ok
    );
    assert!((10.0 * p.log10() - fwd[2]).abs() < 1e-9);
    unsafe { moiso_device_free(dev) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut dev = ptr::null_mut();
    assert_eq!(unsafe { moiso_device_default(&mut dev) }, MoisoStatus::Ok);
    let mut v = 0.0;
    assert_eq!(
        unsafe { moiso_pair_power(dev, 1550.0, 1.0, 1, 7, &mut v) },
        MoisoStatus::Structure
    );
    assert!(last_error().contains("port 7"), "{}", last_error());
    assert_eq!(
        unsafe { moiso_pair_power(dev, 1550.0, 2.0, 1, 2, &mut v) },
        MoisoStatus::Domain
    );
    assert_eq!(
        unsafe { moiso_pair_power(dev, 1550.0, 1.0, 1, 2, ptr::null_mut()) },
        MoisoStatus::NullPointer
    );
    assert_eq!(
        unsafe { moiso_pair_power(ptr::null(), 1550.0, 1.0, 1, 2, &mut v) },
        MoisoStatus::NullPointer
    );
    assert_eq!(
        unsafe { moiso_pair_power(dev, 1550.0, 1.0, 1, 2, &mut v) },
        MoisoStatus::Ok
    );
    assert!(last_error().is_empty());
    unsafe { moiso_device_free(dev) };
    unsafe { moiso_device_free(ptr::null_mut()) };
}

#[test]
fn device_from_json() {
    let json = CString::new(r#"{"arm_path_imbalance_um": 17.5, "base_loss_db": 1.9}"#).unwrap();
    let mut dev = ptr::null_mut();
    assert_eq!(
        unsafe { moiso_device_from_json(json.as_ptr(), &mut dev) },
        MoisoStatus::Ok
    );
    unsafe { moiso_device_free(dev) };
    let bad = CString::new(r#"{"no_such_field": 1}"#).unwrap();
    assert_eq!(
        unsafe { moiso_device_from_json(bad.as_ptr(), &mut dev) },
        MoisoStatus::Config
    );
}

#[test]
fn hom_dip_through_the_abi() {
    let mut st = ptr::null_mut();
    assert_eq!(
        unsafe { moiso_state_spdc(1550.0, 300.0, 64, 100.0, &mut st) },
        MoisoStatus::Ok
    );
    let (mut p0, mut pfar) = (1.0, 0.0);
    assert_eq!(unsafe { moiso_hom_probability(st, 1.0, 0.0, &mut p0) }, MoisoStatus::Ok);
    assert_eq!(
        unsafe { moiso_hom_probability(st, 1.0, 25.0, &mut pfar) },
        MoisoStatus::Ok
    );
    assert!(p0 < 1e-12 && (pfar - 0.5).abs() < 1e-9);

    let dev = calibrated();
    let mut survival = 0.0;
    assert_eq!(
        unsafe { moiso_state_through_device(st, dev, 1.0, 3, 4, &mut survival) },
        MoisoStatus::Ok
    );
    assert!(survival > 0.3 && survival < 1.0, "{survival}");
    assert_eq!(unsafe { moiso_hom_probability(st, 1.0, 0.0, &mut p0) }, MoisoStatus::Ok);
    assert!(p0 > 0.0 && p0 < 0.01, "{p0}");
    assert_eq!(
        unsafe { moiso_hom_probability(st, 1.5, 0.0, &mut p0) },
        MoisoStatus::Domain
    );
    unsafe {
        moiso_state_free(st);
        moiso_device_free(dev);
    }

    let mut v = 0.0;
    assert_eq!(unsafe { moiso_visibility(10.0, 0.0, &mut v) }, MoisoStatus::Ok);
    assert_eq!(v, 1.0);
    assert_eq!(unsafe { moiso_visibility(10.0, 10.0, &mut v) }, MoisoStatus::Ok);
    assert_eq!(v, 0.0);
}

#[test]
fn coincidence_counting() {
    let ch = [1u8, 2, 1, 2];
    let t = [1_000u64, 1_400, 900_000, 950_000];
    let mut r = MoisoCoincidences::default();
    let s = unsafe { moiso_count_coincidences(ch.as_ptr(), t.as_ptr(), 4, 1000.0, 100_000.0, &mut r) };
    assert_eq!(s, MoisoStatus::Ok);
    assert_eq!((r.raw_coincidences, r.singles_i, r.singles_ii), (1, 2, 2));

    let unsorted = [5_000u64, 0, 1_000, 0];
    let s = unsafe { moiso_count_coincidences(ch.as_ptr(), unsorted.as_ptr(), 4, 1000.0, 100_000.0, &mut r) };
    assert_eq!(s, MoisoStatus::Format);
    let bad_channel = [1u8, 3];
    let s = unsafe { moiso_count_coincidences(bad_channel.as_ptr(), t.as_ptr(), 2, 1000.0, 100_000.0, &mut r) };
    assert_eq!(s, MoisoStatus::Format);
}

#[test]
fn header_declares_the_api_and_compiles() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::fs::read_to_string(format!("{dir}/include/moiso.h")).unwrap();
    for f in [
        "moiso_last_error",
        "moiso_device_calibrate",
        "moiso_isolation_db",
        "moiso_spectrum",
        "moiso_hom_probability",
        "moiso_count_coincidences",
        "typedef struct MoisoDevice MoisoDevice",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc")
        .args([
            "-fsyntax-only",
            "-Wall",
            "-Werror",
            "-x",
            "c",
            &format!("{dir}/include/moiso.h"),
        ])
        .status()
    else {
        eprintln!("no C compiler on PATH; syntax check skipped");
        return;
    };
    assert!(status.success());
}
