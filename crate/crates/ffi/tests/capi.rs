use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use vilab_ffi::*;

fn last_error() -> String {
    let p = vilab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn problem(make: impl FnOnce(*mut *mut VilabProblem) -> VilabStatus) -> *mut VilabProblem {
    let mut p = ptr::null_mut();
    assert_eq!(make(&mut p), VilabStatus::Ok);
    assert!(!p.is_null());
    p
}

#[test]
fn run_agraal_on_polar_through_the_c_abi() {
    let p = problem(|out| unsafe { vilab_problem_polar(1.0 / 3.0, out) });
    assert_eq!(unsafe { vilab_problem_dim(p) }, 2);
    let cfg = CString::new("algorithm = \"agraal\"\nphi = 1.2\nmax_iters = 50\n").unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { vilab_run(p, cfg.as_ptr(), &mut t) }, VilabStatus::Ok);
    assert_eq!(unsafe { vilab_trace_len(t) }, 51);

    let mut row = VilabRow::default();
    assert_eq!(unsafe { vilab_trace_row(t, 50, &mut row) }, VilabStatus::Ok);
    assert_eq!(row.iter, 50);
    assert!(row.gap.is_nan() || row.gap >= -1e-12);
    assert!(row.dist.is_finite());
    assert_eq!(unsafe { vilab_trace_row(t, 51, &mut row) }, VilabStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));

    let mut stop = VilabStop::NonFinite;
    assert_eq!(unsafe { vilab_trace_stop(t, &mut stop) }, VilabStatus::Ok);
    assert_eq!(stop, VilabStop::MaxIters);

    let mut z = [0.0; 2];
    assert_eq!(unsafe { vilab_trace_final_point(t, z.as_mut_ptr(), 2) }, VilabStatus::Ok);
    assert!(z.iter().all(|v| v.is_finite()));
    assert_eq!(unsafe { vilab_trace_final_point(t, z.as_mut_ptr(), 3) }, VilabStatus::InvalidArgument);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("t.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { vilab_trace_write_csv(t, path.as_ptr()) }, VilabStatus::Ok);
    let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(text.lines().count(), 52);

    unsafe {
        vilab_trace_free(t);
        vilab_problem_free(p);
    }
}

#[test]
fn bad_config_reports_config_status() {
    let p = problem(|out| unsafe { vilab_problem_forsaken(out) });
    let cfg = CString::new("algorithm = \"agraal\"\nphi = 1.9\n").unwrap();
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { vilab_run(p, cfg.as_ptr(), &mut t) }, VilabStatus::Config);
    assert!(t.is_null());
    assert!(last_error().contains("phi"));
    let junk = CString::new("algorithm = [").unwrap();
    assert_eq!(unsafe { vilab_run(p, junk.as_ptr(), &mut t) }, VilabStatus::Config);
    unsafe { vilab_problem_free(p) };
}

#[test]
fn null_arguments_are_rejected() {
    assert_eq!(unsafe { vilab_problem_polar(1.0, ptr::null_mut()) }, VilabStatus::NullPointer);
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { vilab_run(ptr::null(), ptr::null(), &mut t) }, VilabStatus::NullPointer);
    assert_eq!(unsafe { vilab_trace_len(ptr::null()) }, 0);
    assert_eq!(unsafe { vilab_problem_dim(ptr::null()) }, 0);
    unsafe {
        vilab_problem_free(ptr::null_mut());
        vilab_trace_free(ptr::null_mut());
    }
    assert_eq!(unsafe { vilab_compute_c(1.5, 1.1, ptr::null_mut()) }, VilabStatus::NullPointer);
}

#[test]
fn invalid_problem_parameters() {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { vilab_problem_polar(-1.0, &mut p) }, VilabStatus::InvalidArgument);
    assert_eq!(unsafe { vilab_problem_lower_bound(1.0, 1.0, &mut p) }, VilabStatus::InvalidArgument);
    assert_eq!(unsafe { vilab_problem_matrix_game(7, 5, 0, 0.8, &mut p) }, VilabStatus::InvalidArgument);
    assert!(last_error().contains("kind"));
    assert!(p.is_null());
}

#[test]
fn matrix_game_and_qp_handles() {
    for kind in [VilabGameKind::Random, VilabGameKind::PolicemanBurglar, VilabGameKind::TestMatrix] {
        let p = problem(|out| unsafe { vilab_problem_matrix_game(kind as u32, 5, 1, 0.8, out) });
        assert_eq!(unsafe { vilab_problem_dim(p) }, 10);
        let mut t = ptr::null_mut();
        let cfg = CString::new("algorithm = \"graal\"\nphi = 2.0\nmax_iters = 20").unwrap();
        assert_eq!(unsafe { vilab_run(p, cfg.as_ptr(), &mut t) }, VilabStatus::Ok);
        let mut row = VilabRow::default();
        assert_eq!(unsafe { vilab_trace_row(t, 20, &mut row) }, VilabStatus::Ok);
        assert!(row.gap >= 0.0);
        unsafe {
            vilab_trace_free(t);
            vilab_problem_free(p);
        }
    }
    let p = problem(|out| unsafe { vilab_problem_qp(3, 2, true, out) });
    assert_eq!(unsafe { vilab_problem_dim(p) }, 6);
    unsafe { vilab_problem_free(p) };
}

#[test]
fn certificate_and_constants() {
    let mut v = 0.0;
    let mut g = [0.0; 9];
    assert_eq!(unsafe { vilab_sdp_certificate(2.0, 1e-8, &mut v, g.as_mut_ptr()) }, VilabStatus::Ok);
    assert!((v - 1.49259).abs() < 1e-3);
    assert_eq!(g[0], v);
    assert_eq!(g[1], g[3]);
    assert_eq!(unsafe { vilab_sdp_certificate(2.0, 0.0, &mut v, ptr::null_mut()) }, VilabStatus::InvalidArgument);

    let mut c = 0.0;
    let phi: f64 = 1.5;
    assert_eq!(unsafe { vilab_compute_c(phi, 1.0 / phi + 1.0 / (phi * phi), &mut c) }, VilabStatus::Ok);
    assert!((0.5..=0.75).contains(&c));
    assert_eq!(unsafe { vilab_compute_c(1.5, 1.0, &mut c) }, VilabStatus::InvalidArgument);

    let p = problem(|out| unsafe { vilab_problem_lower_bound(2.0, -1.0, out) });
    let (mut l, mut rho) = (0.0, 0.0);
    assert_eq!(unsafe { vilab_estimate_wm(p, -1.0, 1.0, 41, &mut l, &mut rho) }, VilabStatus::Ok);
    assert!((l - 5f64.sqrt()).abs() < 1e-9);
    assert!((rho - 0.4).abs() < 1e-9);
    assert_eq!(unsafe { vilab_estimate_wm(p, -1.0, 1.0, 1, &mut l, &mut rho) }, VilabStatus::InvalidArgument);
    unsafe { vilab_problem_free(p) };
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(vilab_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

const HEADER: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/include/vilab.h");

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(HEADER).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in
        ["typedef struct VilabProblem VilabProblem;", "typedef struct VilabTrace VilabTrace;", "VILAB_STATUS_OK = 0"]
    {
        assert!(header.contains(ty), "{ty}");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{HEADER}\"\n\
             int main(void) {{\n\
               VilabProblem *p = 0; VilabTrace *t = 0; VilabRow row; double v;\n\
               if (vilab_problem_polar(1.0, &p) != VILAB_STATUS_OK) return 1;\n\
               vilab_run(p, \"max_iters = 3\", &t);\n\
               vilab_trace_row(t, 0, &row);\n\
               vilab_sdp_certificate(2.0, 1e-6, &v, 0);\n\
               vilab_trace_free(t); vilab_problem_free(p);\n\
               return (int)row.iter;\n\
             }}\n"
        ),
    )
    .unwrap();
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let status = Command::new(compiler)
            .args(extra)
            .args(["-Wall", "-Werror", "-fsyntax-only"])
            .arg(&src)
            .status()
            .unwrap_or_else(|e| panic!("{compiler} not runnable: {e}"));
        assert!(status.success(), "{compiler} rejected the header");
    }
}
