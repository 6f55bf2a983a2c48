use std::ffi::{c_char, CString};
use std::ptr;

use opinion_kinetics_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { kod_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&b| b as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn rho_inf_matches_library_and_checks_buffer() {
    let mut out = vec![0.0; 11];
    let st = unsafe { kod_rho_inf(30.0, 0.1, 10, false, out.as_mut_ptr(), out.len()) };
    assert_eq!(st, KodStatus::Ok);
    assert!((out[0] - (0.1f64 / 30.1).powf(0.1)).abs() < 1e-15);

    let mut short = vec![0.0; 5];
    let st = unsafe { kod_rho_inf(30.0, 0.1, 10, true, short.as_mut_ptr(), short.len()) };
    assert_eq!(st, KodStatus::BufferTooSmall);
    assert!(last_error().contains("11 needed"));
    assert_eq!(kod_last_error_length(), last_error().len());

    let st = unsafe { kod_rho_inf(30.0, -1.0, 10, true, out.as_mut_ptr(), out.len()) };
    assert_eq!(st, KodStatus::InvalidArgument);
    let st = unsafe { kod_rho_inf(30.0, 0.1, 10, true, ptr::null_mut(), 11) };
    assert_eq!(st, KodStatus::NullPointer);
}

#[test]
fn g_inf_profile_codes() {
    let mut g = vec![0.0; 41];
    let st = unsafe { kod_g_inf(1.0, 0.0, 0.05, KodProfile::Case1 as i32, 40, g.as_mut_ptr(), g.len()) };
    assert_eq!(st, KodStatus::Ok);
    let mass: f64 = g.iter().sum::<f64>() * 0.05;
    assert!((mass - 1.0).abs() < 1e-12);
    let st = unsafe { kod_g_inf(1.0, 0.0, 0.05, 7, 40, g.as_mut_ptr(), g.len()) };
    assert_eq!(st, KodStatus::InvalidArgument);
    assert!(last_error().contains("profile"));
}

#[test]
fn config_errors_surface_with_line() {
    let src = CString::new("preset = \"test1\"\nbogus = 1\n").unwrap();
    let mut exp: *mut KodExperiment = ptr::null_mut();
    let st = unsafe { kod_experiment_from_toml(src.as_ptr(), &mut exp) };
    assert_eq!(st, KodStatus::Config);
    assert!(exp.is_null());
    assert!(last_error().contains("line 2"), "{}", last_error());
}

#[test]
fn simulation_handle_steps_and_conserves_mass() {
    let src = CString::new("preset = \"test4\"\nn = 20\nc_max = 20\n").unwrap();
    let mut exp: *mut KodExperiment = ptr::null_mut();
    assert_eq!(unsafe { kod_experiment_from_toml(src.as_ptr(), &mut exp) }, KodStatus::Ok);
    let mut sim: *mut KodSimulation = ptr::null_mut();
    assert_eq!(unsafe { kod_simulation_new(exp, &mut sim) }, KodStatus::Ok);
    let (mut nodes, mut levels) = (0usize, 0usize);
    assert_eq!(unsafe { kod_simulation_shape(sim, &mut nodes, &mut levels) }, KodStatus::Ok);
    assert_eq!((nodes, levels), (21, 21));
    let mut taken = 0.0;
    for _ in 0..5 {
        assert_eq!(unsafe { kod_simulation_step(sim, 0.0, &mut taken) }, KodStatus::Ok);
    }
    assert!(taken > 0.0);
    let mut obs = KodObservables::default();
    assert_eq!(unsafe { kod_simulation_observables(sim, &mut obs) }, KodStatus::Ok);
    assert_eq!(obs.steps, 5);
    assert!((obs.mass - 1.0).abs() < 1e-12);
    assert!(obs.min_f >= 0.0);
    let mut f = vec![0.0; nodes * levels];
    assert_eq!(unsafe { kod_simulation_density(sim, f.as_mut_ptr(), f.len()) }, KodStatus::Ok);
    assert!((f.iter().sum::<f64>() * 0.1 - 1.0).abs() < 1e-12);

    let st = unsafe { kod_simulation_step(sim, 1e6, ptr::null_mut()) };
    assert_eq!(st, KodStatus::TimeStepTooLarge);
    assert!(last_error().starts_with("step 6"), "{}", last_error());

    unsafe {
        kod_simulation_free(sim);
        kod_experiment_free(exp);
        kod_simulation_free(ptr::null_mut());
    }
}

#[test]
fn experiment_run_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let name = CString::new("test4").unwrap();
    let mut exp: *mut KodExperiment = ptr::null_mut();
    assert_eq!(unsafe { kod_experiment_from_preset(name.as_ptr(), &mut exp) }, KodStatus::Ok);
    let toml = CString::new("preset = \"test4\"\nn = 20\nc_max = 10\nt_end = 1.0\nsnapshots = []\n").unwrap();
    unsafe { kod_experiment_free(exp) };
    assert_eq!(unsafe { kod_experiment_from_toml(toml.as_ptr(), &mut exp) }, KodStatus::Ok);
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { kod_experiment_set_out_dir(exp, out.as_ptr()) }, KodStatus::Ok);
    assert_eq!(unsafe { kod_experiment_set_seed(exp, 9) }, KodStatus::Ok);
    let mut summary = KodRunSummary::default();
    assert_eq!(unsafe { kod_experiment_run(exp, &mut summary) }, KodStatus::Ok);
    assert_eq!(summary.t, 1.0);
    assert!(summary.final_l1_error.is_nan());
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("f_001.csv").exists());
    unsafe { kod_experiment_free(exp) };

    let missing = CString::new("test2").unwrap();
    assert_eq!(unsafe { kod_experiment_from_preset(missing.as_ptr(), &mut exp) }, KodStatus::Config);
    assert!(last_error().contains("model.rates"));
}

#[test]
fn generated_header_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/opinion_kinetics.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["kod_simulation_step", "kod_last_error_message", "KOD_STATUS_TIME_STEP_TOO_LARGE"] {
        assert!(text.contains(sym), "{sym}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ double r[3]; return kod_rho_inf(30.0, 0.1, 2, true, r, 3) == KOD_STATUS_OK ? 0 : 1; }}\n"
        ),
    )
    .unwrap();
    // compile only: the check is that the header is valid C
    match std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"]).arg(&src).status() {
        Ok(status) => assert!(status.success()),
        Err(_) => eprintln!("no C compiler found; header syntax not checked"),
    }
}
