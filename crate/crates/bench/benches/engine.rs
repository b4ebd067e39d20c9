use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use skyquery::skynode::{CarriedColumn, PartialResultSet};
use skyquery::wire::{decode, encode};
use skyquery::xmatch::CandidateTuple;
use skyquery_bench::cap;
use skyquery::{parse, Accumulators, ArchiveNoise, ColumnType, Member, Message, SkyPosition, SphereIndex, Value, WireConfig, ARCSEC};

const QUERY: &str = "SELECT O.object_id, O.ra_deg, T.object_id, T.i_flux FROM SDSS:Photo_Object O, TWOMASS:Photo_Primary T, \
                     FIRST:Primary P WHERE AREA(185.0, -0.5, 1800) AND XMATCH(O, T, !P) < 3.5 AND O.type = GALAXY \
                     AND (T.i_flux - 0.5) * 2 > 1.5";

fn range_search(c: &mut Criterion) {
    let positions = cap(100_000, 1);
    let center = SkyPosition::from_radec(185.0, -0.5).unwrap();
    let mut g = c.benchmark_group("range_search");
    for depth in [8u8, 10, 12] {
        let index = SphereIndex::build(positions.clone(), depth).unwrap();
        for r_arcsec in [10.0, 60.0, 600.0] {
            g.bench_with_input(BenchmarkId::new(format!("depth{depth}"), r_arcsec), &r_arcsec, |b, &r| {
                b.iter(|| index.range_search(black_box(&center), r * ARCSEC, None))
            });
        }
    }
    g.finish();
}

fn fold_chi(c: &mut Criterion) {
    let positions = cap(8, 2);
    let noise = ArchiveNoise::from_arcsec(0.1).unwrap();
    c.bench_function("fold_8_and_chi", |b| {
        b.iter(|| {
            let acc = positions.iter().fold(Accumulators::EMPTY, |a, p| a.fold(black_box(p), noise));
            acc.chi()
        })
    });
}

fn parse_query(c: &mut Criterion) {
    let mut g = c.benchmark_group("parse");
    g.throughput(Throughput::Bytes(QUERY.len() as u64));
    g.bench_function("three_archive", |b| b.iter(|| parse(black_box(QUERY)).unwrap()));
    g.finish();
}

fn partial_results(n: usize) -> Message {
    let noise = ArchiveNoise::from_arcsec(0.1).unwrap();
    let tuples = cap(n, 3)
        .iter()
        .enumerate()
        .map(|(i, p)| CandidateTuple {
            members: vec![Member { archive: "SDSS".into(), object_id: i as i64 }],
            acc: Accumulators::single(p, noise),
            carried: vec![Value::Int(i as i64), Value::Float(p.to_radec().0)],
        })
        .collect();
    Message::CrossMatchResult(PartialResultSet {
        tuples,
        schema: vec![
            CarriedColumn { alias: "O".into(), column: "object_id".into(), ty: ColumnType::Int },
            CarriedColumn { alias: "O".into(), column: "ra_deg".into(), ty: ColumnType::Float },
        ],
        stage: 1,
        transfers: vec![n as u64],
    })
}

fn wire(c: &mut Criterion) {
    let msg = partial_results(10_000);
    let cfg = WireConfig { max_chunk: 64 << 10, ..WireConfig::default() };
    let bytes: usize = encode(&msg, 1, &cfg).unwrap().iter().map(|e| e.payload.len()).sum();
    let mut g = c.benchmark_group("wire");
    g.throughput(Throughput::Bytes(bytes as u64));
    g.bench_function("encode_10k_tuples", |b| b.iter(|| encode(black_box(&msg), 1, &cfg).unwrap()));
    let envs = encode(&msg, 1, &cfg).unwrap();
    g.bench_function("decode_10k_tuples", |b| b.iter(|| decode(black_box(envs.clone()), &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, range_search, fold_chi, parse_query, wire);
criterion_main!(benches);
