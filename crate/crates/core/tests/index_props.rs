//! Index ranking invariants beyond the brute-force oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ragline_core::corpus::{CorpusStore, Post};
use ragline_core::index::{build_index, DEFAULT_K1};

fn post(id: String, body: String) -> Post {
    Post {
        id,
        title: String::new(),
        body,
        created_utc: 0,
        subreddit: String::new(),
        deleted: false,
    }
}

/// Adding a document that contains no query term and whose field lengths
/// equal the current averages rescales every score by the same per-term
/// factor, so the relative order of existing results is preserved. Asserted
/// for single-term queries, where the rescaling argument is airtight.
#[test]
fn added_nonmatching_doc_preserves_rank_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xADD);
    for _ in 0..200 {
        let vocab = rng.gen_range(3..=10usize);
        let body_len = rng.gen_range(2..=12usize);
        let n_docs = rng.gen_range(2..=20usize);
        let posts: Vec<Post> = (0..n_docs)
            .map(|i| {
                let body = (0..body_len)
                    .map(|_| format!("t{:02}", rng.gen_range(0..vocab)))
                    .collect::<Vec<_>>()
                    .join(" ");
                post(format!("doc{i:03}"), body)
            })
            .collect();
        let term = format!("t{:02}", rng.gen_range(0..vocab));

        let store = CorpusStore::from_posts(posts.clone()).unwrap();
        let index = build_index(&store, &[], DEFAULT_K1).unwrap();
        let before: Vec<String> = index
            .search(&term, n_docs, None)
            .into_iter()
            .map(|r| r.doc_id)
            .collect();

        // Same body length as every existing doc, vocabulary disjoint from
        // the query term.
        let filler = (0..body_len)
            .map(|_| "zzzfiller")
            .collect::<Vec<_>>()
            .join(" ");
        let mut extended = posts;
        extended.push(post("zzz-added".into(), filler));
        let store = CorpusStore::from_posts(extended).unwrap();
        let index = build_index(&store, &[], DEFAULT_K1).unwrap();
        let after: Vec<String> = index
            .search(&term, n_docs + 1, None)
            .into_iter()
            .map(|r| r.doc_id)
            .collect();

        assert_eq!(before, after, "rank order changed for term {term}");
    }
}

/// Every returned document satisfies the time-range restriction.
#[test]
fn time_range_restricts_every_hit() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7157);
    for _ in 0..100 {
        let n_docs = rng.gen_range(1..=30usize);
        let posts: Vec<Post> = (0..n_docs)
            .map(|i| {
                let mut p = post(format!("doc{i:03}"), "shared topic words".into());
                p.created_utc = rng.gen_range(0..1000);
                p
            })
            .collect();
        let store = CorpusStore::from_posts(posts).unwrap();
        let index = build_index(&store, &[], DEFAULT_K1).unwrap();
        let start = rng.gen_range(0..900u64);
        let end = start + rng.gen_range(0..300u64);
        let range = ragline_core::corpus::TimeRange::new(start, end).unwrap();
        for hit in index.search("topic", n_docs, Some(range)) {
            let ts = index.created_utc(&hit.doc_id).unwrap();
            assert!(
                range.contains(ts),
                "hit {} at {ts} outside [{start}, {end}]",
                hit.doc_id
            );
        }
    }
}
