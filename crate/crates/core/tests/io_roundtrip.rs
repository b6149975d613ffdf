use peerfx::io::{load_dataset, write_courses, write_persons};
use peerfx::model::{derive_month_group, filter_estimation_sample, FilterRules};
use peerfx::synth::{generate, DgpConfig};

#[test]
fn generated_data_survives_a_csv_round_trip() {
    let cfg = DgpConfig { n_providers: 6, n_nonparticipants: 2000, ..DgpConfig::default() };
    let (ds, _) = generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (p, c) = (dir.path().join("persons.csv"), dir.path().join("courses.csv"));
    write_persons(&ds, &p).unwrap();
    write_courses(&ds, &c).unwrap();
    let back = load_dataset(&p, &c).unwrap();
    assert_eq!(back.covariate_names(), ds.covariate_names());
    assert_eq!(back.persons(), ds.persons());
    assert_eq!(back.courses(), ds.courses());
}

#[test]
fn filtered_sample_keeps_sizes_consistent_and_is_a_fixed_point() {
    let (ds, _) = generate(&DgpConfig { n_providers: 8, n_nonparticipants: 1000, ..DgpConfig::default() }).unwrap();
    let rules = FilterRules { exclude_prior_program: true, exclude_same_firm: true, ..FilterRules::default() };
    let once = filter_estimation_sample(&ds, &rules).unwrap();
    let twice = filter_estimation_sample(&once, &rules).unwrap();
    assert_eq!(once.persons(), twice.persons());
    assert_eq!(once.courses(), twice.courses());
    for (k, c) in once.courses().iter().enumerate() {
        assert_eq!(c.controls.course_size as usize, once.members(k).len());
    }
    let mut groups = std::collections::BTreeMap::<u32, std::collections::BTreeSet<u8>>::new();
    for c in ds.courses() {
        groups.entry(c.provider_id).or_default().insert(derive_month_group(c).group_index);
    }
    assert!(groups.values().all(|g| g.len() == 4));
}
