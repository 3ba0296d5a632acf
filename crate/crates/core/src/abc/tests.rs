use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use super::*;

const SCHEMES: [AbcScheme; 2] = [AbcScheme::RandomizableSig, AbcScheme::SaltedHash];

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn attrs(pairs: &[(&str, &str)]) -> AttributeMap {
    pairs.iter().copied().collect()
}

fn sample() -> AttributeMap {
    attrs(&[("degree", "Computer Science"), ("org", "ACME"), ("role", "admin"), ("country", "Iceland")])
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn issue_then_verify() {
    for scheme in SCHEMES {
        let mut r = rng(1);
        let ik = abc_keygen(scheme, 8, &mut r).unwrap();
        for a in [AttributeMap::new(), attrs(&[("org", "ACME")]), sample()] {
            let cred = abc_issue(&ik, "uni", &a, &mut r).unwrap();
            assert!(abc_verify_cred(&ik.ipk, &cred), "{scheme}: {a}");
        }
    }
}

#[test]
fn keygen_rejects_zero_and_randomizes() {
    for scheme in SCHEMES {
        let mut r = rng(2);
        assert!(matches!(abc_keygen(scheme, 0, &mut r), Err(AbcError::InvalidParameter(_))));
        let a = abc_keygen(scheme, 3, &mut r).unwrap();
        let b = abc_keygen(scheme, 3, &mut r).unwrap();
        assert_ne!(a.ipk, b.ipk);
        assert_eq!(IssuerPublicKey::from_wire(&a.ipk.to_wire()).unwrap(), a.ipk);
    }
}

#[test]
fn oversize_credential_rejected() {
    for scheme in SCHEMES {
        let mut r = rng(3);
        let ik = abc_keygen(scheme, 3, &mut r).unwrap();
        let err = abc_issue(&ik, "uni", &sample(), &mut r).unwrap_err();
        assert_eq!(err, AbcError::TooManyAttributes { got: 4, max: 3 });
    }
}

#[test]
fn tampered_or_misattributed_credentials_fail() {
    for scheme in SCHEMES {
        let mut r = rng(4);
        let ik = abc_keygen(scheme, 8, &mut r).unwrap();
        let other = abc_keygen(scheme, 8, &mut r).unwrap();
        let cred = abc_issue(&ik, "uni", &sample(), &mut r).unwrap();
        assert!(!abc_verify_cred(&other.ipk, &cred));

        let mut edited = cred.clone();
        edited.attrs.insert("role", "user");
        assert!(!abc_verify_cred(&ik.ipk, &edited));

        let sigma = cred.sigma.to_wire();
        let mut checked = 0;
        for i in (0..sigma.len()).step_by(7) {
            let mut bad = sigma.clone();
            bad[i] ^= 0x01;
            if let Ok(s) = CredentialSignature::from_wire(&bad) {
                let forged = Credential { sigma: s, ..cred.clone() };
                assert!(!abc_verify_cred(&ik.ipk, &forged), "{scheme}: flip at {i}");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }
}

#[test]
fn cross_scheme_inputs_are_rejected() {
    let mut r = rng(5);
    let ps = abc_keygen(AbcScheme::RandomizableSig, 4, &mut r).unwrap();
    let sd = abc_keygen(AbcScheme::SaltedHash, 4, &mut r).unwrap();
    let cred = abc_issue(&ps, "uni", &attrs(&[("org", "ACME")]), &mut r).unwrap();
    assert!(!abc_verify_cred(&sd.ipk, &cred));
    assert_eq!(abc_prove(&sd.ipk, &cred, &AttributeMap::new(), b"h", &mut r).unwrap_err(), AbcError::SchemeMismatch);
    let p = abc_prove(&ps.ipk, &cred, &AttributeMap::new(), b"h", &mut r).unwrap();
    assert!(!abc_verify_proof(&sd.ipk, &p, b"h"));
}

#[test]
fn presentations_verify_and_bind_header() {
    for scheme in SCHEMES {
        let mut r = rng(6);
        let ik = abc_keygen(scheme, 8, &mut r).unwrap();
        let cred = abc_issue(&ik, "uni", &sample(), &mut r).unwrap();
        for disc in [sample(), AttributeMap::new(), attrs(&[("org", "ACME")]), attrs(&[("country", "Iceland"), ("role", "admin")])] {
            let p = abc_prove(&ik.ipk, &cred, &disc, b"header-1", &mut r).unwrap();
            assert_eq!(p.disc_attrs, disc);
            assert!(abc_verify_proof(&ik.ipk, &p, b"header-1"), "{scheme}: {disc}");
            assert!(!abc_verify_proof(&ik.ipk, &p, b"header-2"));
            let mut moved = p.clone();
            moved.header = b"header-2".to_vec();
            assert!(!abc_verify_proof(&ik.ipk, &moved, b"header-2"));
            let back = Presentation::from_wire(&p.to_wire()).unwrap();
            assert_eq!(back, p);
        }
    }
}

#[test]
fn edited_disclosure_and_foreign_issuer_fail() {
    for scheme in SCHEMES {
        let mut r = rng(7);
        let ik = abc_keygen(scheme, 8, &mut r).unwrap();
        let other = abc_keygen(scheme, 8, &mut r).unwrap();
        let cred = abc_issue(&ik, "uni", &sample(), &mut r).unwrap();
        let disc = attrs(&[("org", "ACME"), ("role", "admin")]);
        let p = abc_prove(&ik.ipk, &cred, &disc, b"h", &mut r).unwrap();
        assert!(!abc_verify_proof(&other.ipk, &p, b"h"));

        let mut edited = p.clone();
        edited.disc_attrs.insert("role", "root");
        assert!(!abc_verify_proof(&ik.ipk, &edited, b"h"));

        let mut dropped = p.clone();
        dropped.disc_attrs = attrs(&[("org", "ACME")]);
        assert!(!abc_verify_proof(&ik.ipk, &dropped, b"h"));

        let mut added = p.clone();
        added.disc_attrs.insert("degree", "Computer Science");
        assert!(!abc_verify_proof(&ik.ipk, &added, b"h"));
    }
}

#[test]
fn disclosure_must_be_contained() {
    for scheme in SCHEMES {
        let mut r = rng(8);
        let ik = abc_keygen(scheme, 8, &mut r).unwrap();
        let cred = abc_issue(&ik, "uni", &sample(), &mut r).unwrap();
        for disc in [attrs(&[("org", "Other")]), attrs(&[("age", "30")])] {
            assert_eq!(abc_prove(&ik.ipk, &cred, &disc, b"h", &mut r).unwrap_err(), AbcError::DisclosureMismatch);
        }
    }
}

#[test]
fn proofs_are_randomized() {
    for scheme in [AbcScheme::RandomizableSig] {
        let mut r = rng(9);
        let ik = abc_keygen(scheme, 8, &mut r).unwrap();
        let cred = abc_issue(&ik, "uni", &sample(), &mut r).unwrap();
        let disc = attrs(&[("org", "ACME")]);
        let a = abc_prove(&ik.ipk, &cred, &disc, b"h", &mut rng(100)).unwrap();
        let b = abc_prove(&ik.ipk, &cred, &disc, b"h", &mut rng(101)).unwrap();
        assert_ne!(a.pi, b.pi);
        let c = abc_prove(&ik.ipk, &cred, &disc, b"h", &mut rng(100)).unwrap();
        assert_eq!(a.pi, c.pi);
    }
}

#[test]
fn presentation_leaks_no_hidden_values_or_signature() {
    let mut r = rng(10);
    let ik = abc_keygen(AbcScheme::RandomizableSig, 8, &mut r).unwrap();
    let cred = abc_issue(&ik, "uni", &sample(), &mut r).unwrap();
    let fragments = sigma_fragments(&cred.sigma);
    for disc in [AttributeMap::new(), attrs(&[("org", "ACME")]), attrs(&[("country", "Iceland"), ("role", "admin")])] {
        let p = abc_prove(&ik.ipk, &cred, &disc, b"hdr", &mut r).unwrap();
        let bytes = p.to_wire();
        for (k, v) in cred.attrs.iter() {
            if disc.get(k).is_none() {
                let enc = Node::text(v).encode();
                assert!(enc.len() >= 4);
                assert!(!contains(&bytes, &enc), "value of {k} leaked");
                assert!(!contains(&bytes, v.as_bytes()), "raw value of {k} leaked");
            }
        }
        for frag in &fragments {
            assert!(!contains(&bytes, frag), "signature fragment leaked");
        }
    }
}

#[test]
fn salted_hash_hides_values_but_repeats_issuer_signature() {
    let mut r = rng(11);
    let ik = abc_keygen(AbcScheme::SaltedHash, 8, &mut r).unwrap();
    let cred = abc_issue(&ik, "uni", &sample(), &mut r).unwrap();
    let disc = attrs(&[("org", "ACME")]);
    let a = abc_prove(&ik.ipk, &cred, &disc, b"h1", &mut r).unwrap().to_wire();
    let b = abc_prove(&ik.ipk, &cred, &disc, b"h2", &mut r).unwrap().to_wire();
    assert!(!contains(&a, Node::text("Computer Science").encode().as_slice()));
    assert!(!contains(&a, &cred.sigma.to_wire()));
    let CredentialSignature::SaltedHash(inner) = &cred.sigma else { unreachable!() };
    let shared = inner.fragments();
    assert!(!contains(&a, &shared[0]), "holder seed leaked");
    // The issuer signature is common to both presentations.
    let sig = &cred.sigma.to_wire()[cred.sigma.to_wire().len() - 64..];
    assert!(contains(&a, sig) && contains(&b, sig));
}

#[test]
fn attribute_map_order_is_canonical() {
    let a = attrs(&[("b", "2"), ("a", "1"), ("c", "3")]);
    let b = attrs(&[("c", "3"), ("b", "2"), ("a", "1")]);
    assert_eq!(a.to_wire(), b.to_wire());
    assert_eq!(a.iter().map(|(k, _)| k).collect::<Vec<_>>(), ["a", "b", "c"]);
    assert_eq!(a.to_string(), "{a=1,b=2,c=3}");
    assert_eq!(AttributeMap::from_wire(&a.to_wire()).unwrap(), a);
}
