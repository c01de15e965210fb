use num_complex::Complex;
use proptest::prelude::*;

use ptycho_dd::io::{read_array, write_array, ArrayData, PtyArray};
use ptycho_dd::{ComplexField, PtychoError};

const COMPLEX_FIXTURE: &[u8] = include_bytes!("fixtures/complex_2x3.ptya");
const REAL_FIXTURE: &[u8] = include_bytes!("fixtures/real_4.ptya");

fn complex_fixture_values() -> Vec<Complex<f64>> {
    let mut v: Vec<_> = (0..6)
        .map(|k| Complex::new(k as f64, -0.5 * k as f64))
        .collect();
    v[5] = Complex::new(1e-300, -2.5e300);
    v
}

#[test]
fn complex_fixture_reads_and_rewrites_identically() {
    let a = PtyArray::from_bytes(COMPLEX_FIXTURE).unwrap();
    assert_eq!(a.dims, vec![2, 3]);
    assert_eq!(a.data, ArrayData::Complex(complex_fixture_values()));
    assert_eq!(a.to_bytes(), COMPLEX_FIXTURE);
    let field = a.into_complex().unwrap();
    assert_eq!(*field.get(1, 0), Complex::new(3.0, -1.5));
    assert_eq!(PtyArray::from_complex(&field).to_bytes(), COMPLEX_FIXTURE);
}

#[test]
fn real_fixture_reads_and_rewrites_identically() {
    let a = PtyArray::from_bytes(REAL_FIXTURE).unwrap();
    assert_eq!(a.dims, vec![4]);
    assert_eq!(
        a.data,
        ArrayData::Real(vec![0.0, -1.25, 3.0e-7, f64::INFINITY])
    );
    assert_eq!(a.to_bytes(), REAL_FIXTURE);
}

#[test]
fn corrupted_headers_report_offsets() {
    let offset = |bytes: &[u8]| match PtyArray::from_bytes(bytes) {
        Err(PtychoError::Format { offset, .. }) => offset,
        other => panic!("expected a format error, got {other:?}"),
    };
    let mut bad_magic = COMPLEX_FIXTURE.to_vec();
    bad_magic[0] = b'X';
    assert_eq!(offset(&bad_magic), 0);
    let mut bad_dtype = COMPLEX_FIXTURE.to_vec();
    bad_dtype[6] = 9;
    assert_eq!(offset(&bad_dtype), 6);
    let truncated = &COMPLEX_FIXTURE[..COMPLEX_FIXTURE.len() - 1];
    assert_eq!(offset(truncated), truncated.len() as u64);
    let mut trailing = COMPLEX_FIXTURE.to_vec();
    trailing.push(0);
    assert_eq!(offset(&trailing), COMPLEX_FIXTURE.len() as u64);
    assert!(PtyArray::from_bytes(REAL_FIXTURE)
        .unwrap()
        .into_complex()
        .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn file_round_trip_is_bit_exact(
        (h, w, bits) in (1usize..20, 1usize..20).prop_flat_map(|(h, w)| {
            (Just(h), Just(w), prop::collection::vec(any::<u64>(), 2 * h * w))
        })
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ptya");
        let field = ComplexField::from_fn(h, w, |r, c| {
            let k = 2 * (r * w + c);
            Complex::new(f64::from_bits(bits[k]), f64::from_bits(bits[k + 1]))
        });
        write_array(&path, &PtyArray::from_complex(&field)).unwrap();
        let back = read_array(&path).unwrap().into_complex().unwrap();
        for (a, b) in field.data().iter().zip(back.data()) {
            prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
            prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }
}
