//! Exercises the C ABI through its Rust symbols, and checks that the
//! generated header compiles as C and C++.

use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use densreach::net::{save_checkpoint, DensityNet};
use densreach_ffi::*;

fn last_error() -> String {
    let p = dr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

/// Writes a small random 2-D network checkpoint and loads it through the ABI.
fn load_net(dir: &Path) -> (*mut DrNet, DensityNet) {
    let net = DensityNet::new(2, &[6, 6], 3).unwrap();
    let file = dir.join("net.json");
    std::fs::write(&file, save_checkpoint(&net)).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { dr_net_load(cstr(&file).as_ptr(), &mut handle) }, DrStatus::Ok);
    assert!(!handle.is_null());
    (handle, net)
}

const LO: [f64; 2] = [-1.0, -1.0];
const HI: [f64; 2] = [1.0, 1.0];

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(dr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn network_round_trip_and_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let (net, direct_net) = load_net(dir.path());
    unsafe {
        assert_eq!(dr_net_state_dim(net), 2);
        let (mut z, mut x) = (0.0, [0.0; 2]);
        assert_eq!(
            dr_net_eval(net, [0.3, -0.2].as_ptr(), 2, 0.5, &mut z, x.as_mut_ptr()),
            DrStatus::Ok
        );
        let direct = direct_net.output(&[0.3, -0.2], 0.5);
        assert_eq!(z, direct[0]);
        assert_eq!(x.to_vec(), direct[1..].to_vec());
        assert_eq!(
            dr_net_eval(net, [0.3].as_ptr(), 1, 0.5, &mut z, x.as_mut_ptr()),
            DrStatus::InvalidArgument
        );
        assert!(last_error().contains("dimension"));
        dr_net_free(net);
    }
}

#[test]
fn partition_probabilities_and_verification() {
    let dir = tempfile::tempdir().unwrap();
    let (net, _) = load_net(dir.path());
    unsafe {
        let mut part = ptr::null_mut();
        let status = dr_partition_build(net, 0.5, LO.as_ptr(), HI.as_ptr(), 2, 0, 1, &mut part);
        assert_eq!(status, DrStatus::Ok, "{}", last_error());
        let cells = dr_partition_cell_count(part);
        assert!(cells >= 1);
        assert_eq!(dr_partition_time(part), 0.5);

        let file = cstr(&dir.path().join("cells.json"));
        assert_eq!(dr_partition_save(part, file.as_ptr()), DrStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(dr_partition_load(file.as_ptr(), &mut again), DrStatus::Ok);
        assert_eq!(dr_partition_cell_count(again), cells);

        let mut dist = ptr::null_mut();
        assert_eq!(dr_dist_uniform(LO.as_ptr(), HI.as_ptr(), 2, &mut dist), DrStatus::Ok);
        let mut rho = 0.0;
        assert_eq!(dr_dist_density(dist, [0.0, 0.0].as_ptr(), 2, &mut rho), DrStatus::Ok);
        assert!((rho - 0.25).abs() < 1e-15);

        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(dr_total_probability(part, dist, &mut lo, &mut hi), DrStatus::Ok);
        assert!((lo - 1.0).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9, "{lo} {hi}");

        // Whole output space: every initial state qualifies.
        let a = [1.0, 0.0];
        let b = [1e9];
        assert_eq!(
            dr_query_probability(
                part,
                dist,
                a.as_ptr(),
                b.as_ptr(),
                1,
                2,
                f64::NEG_INFINITY,
                f64::INFINITY,
                &mut lo,
                &mut hi
            ),
            DrStatus::Ok
        );
        assert!((lo - 1.0).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9);

        // An unsafe set far outside every cell output is never reached.
        let a = [1.0, 0.0];
        let b = [-1e6];
        let parts = [part as *const DrPartition, again as *const DrPartition];
        let (mut safe, mut lps) = (-1, usize::MAX);
        let status = dr_verify_density_range(
            parts.as_ptr(),
            2,
            dist,
            a.as_ptr(),
            b.as_ptr(),
            1,
            2,
            0.0,
            f64::INFINITY,
            true,
            &mut safe,
            &mut lps,
        );
        assert_eq!(status, DrStatus::Ok, "{}", last_error());
        assert_eq!(safe, 1);
        assert_eq!(lps, 0);

        dr_partition_free(part);
        dr_partition_free(again);
        dr_dist_free(dist);
        dr_net_free(net);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(dr_net_load(ptr::null(), &mut net), DrStatus::NullPointer);
        let missing = cstr(&dir.path().join("missing.json"));
        assert_eq!(dr_net_load(missing.as_ptr(), &mut net), DrStatus::Io);
        let garbage = dir.path().join("garbage.json");
        std::fs::write(&garbage, b"{not json").unwrap();
        assert_eq!(dr_net_load(cstr(&garbage).as_ptr(), &mut net), DrStatus::Parse);
        assert!(last_error().contains("line 1"));
        assert!(net.is_null());

        let mut dist = ptr::null_mut();
        assert_eq!(
            dr_dist_uniform(HI.as_ptr(), LO.as_ptr(), 2, &mut dist),
            DrStatus::InvalidArgument
        );
        assert_eq!(
            dr_dist_uniform(LO.as_ptr(), HI.as_ptr(), 2, ptr::null_mut()),
            DrStatus::NullPointer
        );
        let sigma = [0.0, 1.0];
        let mu = [0.0, 0.0];
        assert_ne!(
            dr_dist_truncated_gaussian(LO.as_ptr(), HI.as_ptr(), mu.as_ptr(), sigma.as_ptr(), 2, &mut dist),
            DrStatus::Ok
        );

        // Freeing null is a no-op; queries on null handles report it.
        dr_net_free(ptr::null_mut());
        dr_partition_free(ptr::null_mut());
        dr_dist_free(ptr::null_mut());
        assert_eq!(dr_partition_cell_count(ptr::null()), 0);
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(
            dr_total_probability(ptr::null(), ptr::null(), &mut lo, &mut hi),
            DrStatus::NullPointer
        );
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("densreach.h");
    assert!(header.exists(), "header not generated");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"densreach.h\"\n\
         int main(void) {\n\
           DrNet *net = NULL;\n\
           DrStatus s = dr_net_load(\"net.json\", &net);\n\
           if (s != DR_STATUS_OK) { const char *m = dr_last_error_message(); (void)m; return 1; }\n\
           dr_net_free(net);\n\
           return 0;\n\
         }\n",
    )
    .unwrap();
    let include = header.parent().unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let out = match Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg("-I")
            .arg(include)
            .arg(&src)
            .output()
        {
            Ok(o) => o,
            Err(_) => {
                eprintln!("{compiler} not available; skipping {lang} header check");
                continue;
            }
        };
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
