use std::io::Cursor;

use proptest::prelude::*;
use raysense::io::{
    load_cloud, load_signature, read_cloud_binary, read_cloud_text, read_rays, read_signature, write_cloud_binary,
    write_cloud_text, write_rays, write_signature, CloudFormat, FormatError,
};
use raysense::Error;
use raysense_core::pointcloud::{synth_shape, ShapeKind, ShapeParams};
use raysense_core::rays::{generate_r1, generate_r2, DEFAULT_TAU};
use raysense_core::signature::{build_signature, FeatureSpec};
use raysense_core::PointCloud;

fn sphere(n: usize) -> PointCloud {
    synth_shape(ShapeKind::Sphere, n, 3, &ShapeParams::default(), 5).unwrap()
}

fn signature_bytes(kappa: usize) -> (raysense_core::Signature, Vec<u8>) {
    let cloud = sphere(300);
    let rays = generate_r1(7, 5, 3, 2.0, 9).unwrap();
    let spec = FeatureSpec::default().with_kappa(kappa);
    let sig = build_signature(&cloud, &rays, &spec).unwrap();
    let mut bytes = Vec::new();
    write_signature(&mut bytes, &sig).unwrap();
    (sig, bytes)
}

/// Little-endian field walker, independent of the library reader.
struct Fields<'a>(&'a [u8]);

impl Fields<'_> {
    fn take(&mut self, n: usize) -> &[u8] {
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        head
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().unwrap())
    }
}

#[test]
fn signature_layout_matches_field_by_field_decode() {
    let (sig, bytes) = signature_bytes(2);
    let mut f = Fields(&bytes);
    assert_eq!(f.take(4), b"RSSG");
    assert_eq!(f.u32(), 1);
    let (m, k, c, d, kappa) = (f.u64() as usize, f.u32() as usize, f.u32() as usize, f.u32() as usize, f.u32() as usize);
    assert_eq!((m, k, c), sig.shape());
    assert_eq!((d, kappa), (3, 2));
    assert_eq!(f.take(1)[0], sig.spec().flags());
    let tensor: Vec<f32> = (0..m * k * c).map(|_| f32::from_bits(f.u32())).collect();
    assert_eq!(tensor, sig.tensor());
    let ids: Vec<u64> = (0..m * k * kappa).map(|_| f.u64()).collect();
    assert_eq!(ids, sig.sensed_ids());
    let len = f.u64() as usize;
    let json: serde_json::Value = serde_json::from_slice(f.take(len)).unwrap();
    assert_eq!(json["cloud_len"], 300);
    assert!(f.0.is_empty());
}

#[test]
fn signature_round_trip_is_exact() {
    for kappa in [1, 3] {
        let (sig, bytes) = signature_bytes(kappa);
        let back = read_signature(Cursor::new(&bytes)).unwrap();
        assert_eq!(back.shape(), sig.shape());
        assert_eq!(back.spec(), sig.spec());
        let bits = |s: &raysense_core::Signature| s.tensor().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&sig));
        assert_eq!(back.sensed_ids(), sig.sensed_ids());
        assert_eq!(back.provenance(), sig.provenance());
    }
}

#[test]
fn every_signature_prefix_is_rejected() {
    let (_, bytes) = signature_bytes(1);
    for cut in 0..bytes.len() {
        let err = read_signature(Cursor::new(&bytes[..cut])).unwrap_err();
        assert!(matches!(err, FormatError::Truncated(_)), "cut {cut}: {err}");
    }
}

#[test]
fn signature_header_errors() {
    let (_, bytes) = signature_bytes(1);
    let mut bad = bytes.clone();
    bad[..4].copy_from_slice(b"RSPC");
    assert!(matches!(read_signature(Cursor::new(&bad)), Err(FormatError::BadMagic { .. })));
    for version in [0u32, 2] {
        let mut bad = bytes.clone();
        bad[4..8].copy_from_slice(&version.to_le_bytes());
        assert!(matches!(read_signature(Cursor::new(&bad)), Err(FormatError::UnsupportedVersion(v)) if v == version));
    }
    // channel count at offset 20
    let mut bad = bytes.clone();
    bad[20..24].copy_from_slice(&99u32.to_le_bytes());
    assert!(matches!(read_signature(Cursor::new(&bad)), Err(FormatError::Invalid(_))));
    let mut long = bytes.clone();
    long.push(0);
    assert!(read_signature(Cursor::new(&long)).is_err());
}

#[test]
fn negative_sensed_id_rejected() {
    let (sig, mut bytes) = signature_bytes(1);
    let (m, k, c) = sig.shape();
    let at = 4 + 4 + 8 + 4 * 4 + 1 + 4 * m * k * c;
    bytes[at..at + 8].copy_from_slice(&(-1i64).to_le_bytes());
    assert!(matches!(read_signature(Cursor::new(&bytes)), Err(FormatError::Invalid(_))));
}

#[test]
fn rays_round_trip() {
    let r1 = generate_r1(6, 4, 5, 1.5, 3).unwrap();
    let r2 = generate_r2(6, 4, 5, DEFAULT_TAU, 1.0, 3).unwrap();
    for rays in [r1, r2] {
        let mut bytes = Vec::new();
        write_rays(&mut bytes, &rays).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 1 + 8 + 4 + 4 + 6 * 4 * 5 * 4);
        let back = read_rays(Cursor::new(&bytes)).unwrap();
        assert_eq!((back.len(), back.k(), back.dim(), back.method()), (6, 4, 5, rays.method()));
        for (a, b) in back.all_samples().zip(rays.all_samples()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x, f64::from(*y as f32));
            }
        }
        for cut in 0..bytes.len() {
            assert!(read_rays(Cursor::new(&bytes[..cut])).is_err());
        }
    }
}

#[test]
fn binary_cloud_round_trip_with_labels() {
    let cloud = sphere(50).with_labels((0..50).map(|i| i % 4 - 1).collect()).unwrap();
    let mut bytes = Vec::new();
    write_cloud_binary(&mut bytes, &cloud).unwrap();
    assert_eq!(bytes.len(), 4 + 4 + 4 + 8 + 50 * 3 * 4 + 1 + 50 * 4);
    let back = read_cloud_binary(Cursor::new(&bytes)).unwrap();
    assert_eq!(back.labels(), cloud.labels());
    for (a, b) in back.coords().iter().zip(cloud.coords()) {
        assert_eq!(*a, f64::from(*b as f32));
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_cloud_binary(Cursor::new(&bad)), Err(FormatError::BadMagic { .. })));
}

#[test]
fn binary_cloud_rejects_nan_and_empty() {
    let mut bytes = Vec::new();
    write_cloud_binary(&mut bytes, &PointCloud::from_rows(&[[0.0, 1.0]]).unwrap()).unwrap();
    bytes[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(read_cloud_binary(Cursor::new(&bytes)), Err(FormatError::NonFinite(_))));
    let mut empty = b"RSPC".to_vec();
    empty.extend(1u32.to_le_bytes());
    empty.extend(3u32.to_le_bytes());
    empty.extend(0u64.to_le_bytes());
    empty.push(0);
    assert!(matches!(read_cloud_binary(Cursor::new(&empty)), Err(FormatError::Empty)));
}

#[test]
fn text_cloud_errors() {
    let err = read_cloud_text(Cursor::new("1 2 3\n4 5\n"), false).unwrap_err();
    assert!(matches!(err, FormatError::ColumnCount { line: 2, expected: 3, found: 2 }));
    let err = read_cloud_text(Cursor::new("# header\n1 2\nnan 3\n"), false).unwrap_err();
    assert!(matches!(err, FormatError::NonFinite(ref s) if s.contains('3')), "{err}");
    let err = read_cloud_text(Cursor::new("1 x\n"), false).unwrap_err();
    assert!(matches!(err, FormatError::Parse { line: 1, .. }));
    assert!(matches!(read_cloud_text(Cursor::new("\n# only comments\n"), false), Err(FormatError::Empty)));
    assert!(matches!(read_cloud_text(Cursor::new("1 2 1.5\n"), true), Err(FormatError::Parse { .. })));
}

#[test]
fn text_cloud_labels_column() {
    let c = read_cloud_text(Cursor::new("0.5 1 2\n-1 3 -1\n"), true).unwrap();
    assert_eq!(c.dim(), 2);
    assert_eq!(c.labels(), Some(&[2, -1][..]));
    assert_eq!(c.point(1), &[-1.0, 3.0]);
}

#[test]
fn missing_file_is_not_found() {
    let err = load_cloud("does/not/exist.xyz".as_ref(), CloudFormat::TextXyz { labels: false }).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("does/not/exist.xyz"));
    let err = load_signature("nope.rssg".as_ref()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn corrupt_file_is_a_computation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.rssg");
    std::fs::write(&path, b"RSSG\x09\0\0\0").unwrap();
    let err = load_signature(&path).unwrap_err();
    assert!(matches!(err, Error::Format { source: FormatError::UnsupportedVersion(9), .. }));
    assert_eq!(err.exit_code(), 1);
}

proptest! {
    #[test]
    fn text_cloud_round_trip(
        dim in 1usize..6,
        rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 6), 1..40),
        labels in any::<bool>(),
    ) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r[..dim].to_vec()).collect();
        let mut cloud = PointCloud::from_rows(&rows).unwrap();
        if labels {
            cloud = cloud.with_labels((0..rows.len() as i32).map(|i| i - 3).collect()).unwrap();
        }
        let mut text = Vec::new();
        write_cloud_text(&mut text, &cloud).unwrap();
        let back = read_cloud_text(Cursor::new(text), labels).unwrap();
        prop_assert_eq!(back.coords(), cloud.coords());
        prop_assert_eq!(back.labels(), cloud.labels());
    }

    #[test]
    fn binary_cloud_round_trip_f32_exact(coords in prop::collection::vec(-1e3f32..1e3, 3..300)) {
        let n = coords.len() / 3;
        let cloud = PointCloud::new(3, coords[..3 * n].iter().map(|&x| f64::from(x)).collect()).unwrap();
        let mut bytes = Vec::new();
        write_cloud_binary(&mut bytes, &cloud).unwrap();
        let back = read_cloud_binary(Cursor::new(bytes)).unwrap();
        prop_assert_eq!(back.coords(), cloud.coords());
    }

    #[test]
    fn garbage_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = read_signature(Cursor::new(&bytes));
        let _ = read_rays(Cursor::new(&bytes));
        let _ = read_cloud_binary(Cursor::new(&bytes));
    }
}
