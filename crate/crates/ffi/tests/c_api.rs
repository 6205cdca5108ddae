use std::ffi::{c_char, CString};
use std::path::Path;
use std::ptr;

use adnet::commands::model_checkpoint;
use adnet::grid::{GridSpec, GridVector, ObjectCategory};
use adnet::ingest::{GpsFeature, Sample};
use adnet::nn::{ModelConfig, Network, Variant};
use adnet_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { adnet_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn save_model(dir: &Path, variant: Variant) -> (CString, Network, GridSpec) {
    let spec = GridSpec::new(4, 4, 640, 480).unwrap();
    let mut c = ModelConfig::for_variant(variant, spec.len());
    c.hidden_sizes = vec![12];
    c.latent_dim = 3;
    let net = Network::new(c, 11).unwrap();
    let path = dir.join(format!("{}.ckpt", variant.slug()));
    model_checkpoint(&net, &spec).save(&path).unwrap();
    (CString::new(path.to_str().unwrap()).unwrap(), net, spec)
}

fn load(path: &CString) -> *mut AdnetNetwork {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { adnet_network_load(path.as_ptr(), &mut h) }, AdnetStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn reconstruct_and_detect_match_library() {
    let dir = tempfile::tempdir().unwrap();
    for v in Variant::ALL {
        let (path, net, spec) = save_model(dir.path(), v);
        let h = load(&path);
        let (mut len, mut gps_used) = (0usize, false);
        unsafe {
            assert_eq!(adnet_network_grid_len(h, &mut len), AdnetStatus::Ok);
            assert_eq!(adnet_network_uses_gps(h, &mut gps_used), AdnetStatus::Ok);
        }
        assert_eq!((len, gps_used), (spec.len(), v.use_gps()));

        let grid = GridVector::zeros(spec)
            .set_cell(&spec.cell(1, 2, ObjectCategory::Car).unwrap())
            .unwrap()
            .set_cell(&spec.cell(3, 0, ObjectCategory::Person).unwrap())
            .unwrap();
        let gps = GpsFeature::new(0.2, 0.7, 0.4);
        let mut probs = vec![0.0; len];
        let st =
            unsafe { adnet_network_reconstruct(h, grid.bits().as_ptr(), len, gps.values.as_ptr(), probs.as_mut_ptr()) };
        assert_eq!(st, AdnetStatus::Ok);
        assert_eq!(probs, adnet::detect::reconstruct(&net, &grid, &gps).unwrap());

        let (mut m, mut flags, mut scene) = (vec![9u8; len], vec![9u8; len], false);
        let st = unsafe {
            adnet_detect(
                h,
                grid.bits().as_ptr(),
                len,
                gps.values.as_ptr(),
                0.5,
                m.as_mut_ptr(),
                flags.as_mut_ptr(),
                &mut scene,
            )
        };
        assert_eq!(st, AdnetStatus::Ok);
        let sample = Sample {
            grid: grid.clone(),
            gps,
            source_frame: String::new(),
        };
        let report = adnet::detect::detect(&net, &sample, 0.5).unwrap();
        assert_eq!(m, report.m_grid.bits());
        assert_eq!(scene, report.scene_anomalous);
        let expected: Vec<u8> = (0..len)
            .map(|i| u8::from(report.anomalous_cells.contains(&spec.cell_at(i).unwrap())))
            .collect();
        assert_eq!(flags, expected);
        unsafe { adnet_network_free(h) };
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { adnet_network_load(missing.as_ptr(), &mut h) }, AdnetStatus::Io);
    assert!(h.is_null());
    assert!(last_error().contains("nope.ckpt"), "{}", last_error());

    let garbage = dir.path().join("bad.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { adnet_network_load(garbage.as_ptr(), &mut h) },
        AdnetStatus::Format
    );

    assert_eq!(
        unsafe { adnet_network_load(ptr::null(), &mut h) },
        AdnetStatus::NullPointer
    );

    let (path, _, spec) = save_model(dir.path(), Variant::Vae);
    let h = load(&path);
    assert!(last_error().is_empty());
    let short = vec![0u8; spec.len() - 8];
    let mut out = vec![0.0; spec.len()];
    let st = unsafe { adnet_network_reconstruct(h, short.as_ptr(), short.len(), ptr::null(), out.as_mut_ptr()) };
    assert_eq!(st, AdnetStatus::Shape);

    let grid = vec![0u8; spec.len()];
    let mut m = vec![0u8; spec.len()];
    let st = unsafe {
        adnet_detect(
            h,
            grid.as_ptr(),
            grid.len(),
            ptr::null(),
            1.5,
            m.as_mut_ptr(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, AdnetStatus::Config);
    assert!(last_error().contains("threshold"));

    let mut bad = grid.clone();
    bad[0] = 2;
    let st = unsafe {
        adnet_detect(
            h,
            bad.as_ptr(),
            bad.len(),
            ptr::null(),
            0.5,
            m.as_mut_ptr(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_ne!(st, AdnetStatus::Ok);
    unsafe {
        adnet_network_free(h);
        adnet_network_free(ptr::null_mut());
    }
}

#[test]
fn metrics_by_hand() {
    let ground = [1u8, 1, 0, 0, 1, 0, 0, 0];
    let out = [1u8, 0, 1, 0, 1, 0, 0, 0];
    let mut m = AdnetMetrics::default();
    assert_eq!(
        unsafe { adnet_metrics(ground.as_ptr(), out.as_ptr(), 8, &mut m) },
        AdnetStatus::Ok
    );
    assert_eq!((m.tp, m.tn, m.fp, m.fn_), (2, 4, 1, 1));
    assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
    assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
    assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    assert!(!m.degenerate);

    let zeros = [0u8; 8];
    assert_eq!(
        unsafe { adnet_metrics(zeros.as_ptr(), zeros.as_ptr(), 8, &mut m) },
        AdnetStatus::Ok
    );
    assert!(m.degenerate && m.f1 == 0.0);
    assert_eq!(
        unsafe { adnet_metrics(zeros.as_ptr(), zeros.as_ptr(), 7, &mut m) },
        AdnetStatus::Shape
    );
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/adnet.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "adnet_network_load",
        "adnet_network_free",
        "adnet_detect",
        "adnet_metrics",
        "adnet_last_error",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"adnet.h\"\nint main(void) { AdnetNetwork *h = 0; size_t n = 0;\n\
         return adnet_network_grid_len(h, &n) == ADNET_STATUS_NULL_POINTER ? 0 : 1; }\n",
    )
    .unwrap();
    let Ok(status) = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler; header syntax not checked");
        return;
    };
    assert!(status.success());
}
