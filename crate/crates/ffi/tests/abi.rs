use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use racetrack_ffi::*;

fn last_error() -> String {
    let p = racetrack_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(racetrack_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn default_params_validate() {
    let p = racetrack_params_default();
    assert_eq!(unsafe { racetrack_params_validate(&p) }, RacetrackStatus::Ok);
    assert_eq!((p.mu, p.sigma, p.eta), (0.5, 3.0, 2.0));
}

#[test]
fn invalid_params_report_config_and_name_the_field() {
    let p = RacetrackParams {
        sigma: 0.5,
        ..racetrack_params_default()
    };
    assert_eq!(unsafe { racetrack_params_validate(&p) }, RacetrackStatus::Config);
    assert!(last_error().contains("sigma"));
}

#[test]
fn null_pointers_are_rejected() {
    assert_eq!(
        unsafe { racetrack_params_validate(ptr::null()) },
        RacetrackStatus::NullPointer
    );
    assert!(last_error().contains("params"));
    let p = racetrack_params_default();
    assert_eq!(
        unsafe { racetrack_mode_growth(1, &p, ptr::null_mut()) },
        RacetrackStatus::NullPointer
    );
    unsafe {
        racetrack_grid_free(ptr::null_mut());
        racetrack_solver_free(ptr::null_mut());
    }
    assert_eq!(unsafe { racetrack_grid_len(ptr::null()) }, 0);
}

#[test]
fn mode_growth_matches_the_library() {
    let p = racetrack_params_default();
    let mut out = RacetrackSpectral::default();
    assert_eq!(unsafe { racetrack_mode_growth(3, &p, &mut out) }, RacetrackStatus::Ok);
    let direct = racetrack::spectral::mode_growth(3, &racetrack::ModelParams::default()).unwrap();
    assert_eq!(out.n, 3);
    assert_eq!(out.eigenvalue, direct.eigenvalue);
    assert_eq!(out.h_beta, direct.h_beta);

    assert_eq!(
        unsafe { racetrack_mode_growth(0, &p, &mut out) },
        RacetrackStatus::Config
    );
}

#[test]
fn critical_points_of_the_first_mode() {
    let p = racetrack_params_default();
    let mut out = RacetrackCritical::default();
    assert_eq!(
        unsafe { racetrack_critical_points(1, &p, &mut out) },
        RacetrackStatus::Ok
    );
    assert_eq!(out.status, 2);
    assert!(out.lower > 0.0 && out.lower < out.upper);

    let stable = RacetrackParams { tau_a: 2.5, ..p };
    assert_eq!(
        unsafe { racetrack_critical_points(1, &stable, &mut out) },
        RacetrackStatus::Ok
    );
    assert_eq!(out.status, 0);
    assert!(out.lower.is_nan() && out.upper.is_nan());
}

#[test]
fn grid_and_solver_lifecycle() {
    unsafe {
        let mut grid: *mut RacetrackGrid = ptr::null_mut();
        assert_eq!(racetrack_grid_new(64, 1.0, &mut grid), RacetrackStatus::Ok);
        assert_eq!(racetrack_grid_len(grid), 64);

        let mut angles = vec![0.0; 64];
        assert_eq!(
            racetrack_grid_angles(grid, angles.as_mut_ptr(), 64),
            RacetrackStatus::Ok
        );
        assert_eq!(angles[0], -std::f64::consts::PI);
        assert_eq!(
            racetrack_grid_angles(grid, angles.as_mut_ptr(), 63),
            RacetrackStatus::BufferSize
        );

        let p = racetrack_params_default();
        let mut solver: *mut RacetrackSolver = ptr::null_mut();
        assert_eq!(racetrack_solver_new(grid, &p, &mut solver), RacetrackStatus::Ok);

        let lambda = vec![1.0 / (2.0 * std::f64::consts::PI); 64];
        let mut wage = vec![0.0; 64];
        let mut iterations = 0usize;
        let status = racetrack_solver_solve(solver, lambda.as_ptr(), wage.as_mut_ptr(), 64, &mut iterations);
        assert_eq!(status, RacetrackStatus::Ok);
        assert!(iterations >= 1);
        assert!(wage.iter().all(|w| (w - wage[0]).abs() <= 1e-12 * wage[0]));

        let mut bad = lambda.clone();
        bad[0] *= 3.0;
        let status = racetrack_solver_solve(solver, bad.as_ptr(), wage.as_mut_ptr(), 64, ptr::null_mut());
        assert_eq!(status, RacetrackStatus::Config);

        racetrack_solver_free(solver);
        racetrack_grid_free(grid);
    }
}

#[test]
fn grid_rejects_odd_node_counts() {
    let mut grid: *mut RacetrackGrid = ptr::null_mut();
    assert_eq!(
        unsafe { racetrack_grid_new(7, 1.0, &mut grid) },
        RacetrackStatus::Config
    );
    assert!(grid.is_null());
}

#[test]
fn radius_mismatch_is_a_config_error() {
    unsafe {
        let mut grid: *mut RacetrackGrid = ptr::null_mut();
        assert_eq!(racetrack_grid_new(32, 2.0, &mut grid), RacetrackStatus::Ok);
        let p = racetrack_params_default();
        let mut solver: *mut RacetrackSolver = ptr::null_mut();
        assert_eq!(racetrack_solver_new(grid, &p, &mut solver), RacetrackStatus::Config);
        assert!(solver.is_null());
        racetrack_grid_free(grid);
    }
}

#[test]
fn short_simulation_reports_its_summary() {
    unsafe {
        let mut grid: *mut RacetrackGrid = ptr::null_mut();
        assert_eq!(racetrack_grid_new(32, 1.0, &mut grid), RacetrackStatus::Ok);
        let p = racetrack_params_default();
        let mut lambda = vec![0.0; 32];
        let mut summary = RacetrackRunSummary::default();
        let status = racetrack_simulate(grid, &p, 3, 0.01, 50, lambda.as_mut_ptr(), 32, &mut summary);
        assert_eq!(status, RacetrackStatus::Ok);
        assert_eq!(summary.steps, 50);
        assert_eq!(summary.converged, 0);
        assert!(summary.max_mass_drift < 1e-12);
        assert!(lambda.iter().all(|v| *v > 0.0));
        racetrack_grid_free(grid);
    }
}

#[test]
fn spike_counter_on_two_bumps() {
    let mut v = [1.0; 16];
    v[3] = 5.0;
    v[11] = 4.0;
    let mut count = 0usize;
    assert_eq!(
        unsafe { racetrack_count_spikes(v.as_ptr(), v.len(), 1.0, &mut count) },
        RacetrackStatus::Ok
    );
    assert_eq!(count, 2);
}

fn header() -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/racetrack.h");
    std::fs::read_to_string(path).expect("header is generated by the build script")
}

#[test]
fn header_declares_every_export() {
    let h = header();
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12, "found only {exports:?}");
    for name in exports {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["RacetrackGrid", "RacetrackSolver", "RACETRACK_STATUS_BUFFER_SIZE = 4"] {
        assert!(h.contains(ty), "{ty} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    // Only meaningful where a C compiler is installed.
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler found; header syntax not checked");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile_dir();
    let src = dir.join("check.c");
    std::fs::write(
        &src,
        "#include \"racetrack.h\"\nint main(void) { RacetrackParams p = racetrack_params_default(); \
         return racetrack_params_validate(&p) == RACETRACK_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("racetrack-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
