use std::fs::File;
use std::io::BufReader;

use cosub::data::{load_dataset, write_choices_csv, write_networks_csv, NetworkFormat};
use cosub::gibbs::{run_chain, ChainConfig, JsonlSink, TraceRecord};
use cosub::model::Hyperparameters;
use cosub::simulate::{default_scenario, generate, SimConfig};
use cosub::strategy::strategy_table;
use cosub::summary::{
    map_partition, summarize_fit, summarize_relabeled, write_summary_json, PosteriorSummary,
};

#[test]
fn files_round_trip_through_fit_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimConfig {
        n: 30,
        customers: 150,
        seed: 4,
        ..default_scenario()
    };
    let (data, _) = generate(&cfg).unwrap();
    let (choices, networks) = (dir.path().join("c.csv"), dir.path().join("n.csv"));
    write_choices_csv(&data, &choices).unwrap();
    write_networks_csv(&data, &networks).unwrap();
    let loaded = load_dataset(&choices, &networks, NetworkFormat::Wide).unwrap();
    assert_eq!(loaded, data);

    let hp = Hyperparameters::empirical(&loaded, 5, 3, 1.0).unwrap();
    let chain = ChainConfig {
        iterations: 60,
        burnin: 20,
        seed: 4,
        ..Default::default()
    };
    let trace_path = dir.path().join("trace.jsonl");
    let mut sink =
        JsonlSink::<_, std::io::Sink>::new(File::create(&trace_path).unwrap(), None).unwrap();
    let out = run_chain(&loaded, &hp, &chain, &mut sink).unwrap();
    sink.flush().unwrap();
    drop(sink);
    let trace = TraceRecord::read_jsonl(BufReader::new(File::open(&trace_path).unwrap())).unwrap();
    assert_eq!(trace.len(), out.retained);
    let mut in_memory: Vec<TraceRecord> = Vec::new();
    run_chain(&loaded, &hp, &chain, &mut in_memory).unwrap();
    assert_eq!(
        map_partition(&trace).unwrap(),
        map_partition(&in_memory).unwrap()
    );

    let rerun = ChainConfig {
        iterations: 40,
        burnin: 10,
        ..Default::default()
    };
    let (summary, conditional) = summarize_fit(&loaded, &hp, &trace, &rerun).unwrap();
    assert_eq!(conditional.len(), 30);
    for row in &summary.p_hat.mean {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let json = dir.path().join("summary.json");
    write_summary_json(&summary, &json).unwrap();
    let back: PosteriorSummary =
        serde_json::from_reader(BufReader::new(File::open(&json).unwrap())).unwrap();
    assert_eq!(
        (&back.map_partition, back.k_hat),
        (&summary.map_partition, summary.k_hat)
    );
    let flat = |s: &PosteriorSummary| -> Vec<f64> {
        s.p_hat
            .mean
            .iter()
            .chain(&s.pibar_hat.q75)
            .flatten()
            .copied()
            .collect()
    };
    assert!(flat(&back)
        .iter()
        .zip(flat(&summary))
        .all(|(a, b)| (a - b).abs() < 1e-14));

    let table = strategy_table(&summary, Some(&conditional), 2).unwrap();
    assert_eq!(table.rows.len(), summary.k_hat * 15);
    assert_eq!(table.multi_offers.len(), summary.k_hat * 15);

    let (relabeled, aligned) = summarize_relabeled(&trace, &summary.map_partition).unwrap();
    assert_eq!(relabeled.k_hat, summary.k_hat);
    assert!(aligned.iter().all(|r| r.cluster_count() == summary.k_hat));
}
