use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{AnnotationError, AnnotationRecord, AnnotationRequest, Annotator};

/// Memoizes an annotator by request fingerprint. Safe to share across threads.
pub struct CachedAnnotator<A> {
    inner: A,
    records: Mutex<HashMap<String, AnnotationRecord>>,
    hits: AtomicUsize,
}

impl<A: Annotator> CachedAnnotator<A> {
    pub fn new(inner: A) -> Self {
        Self {
            inner,
            records: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
        }
    }

    /// Seeds the cache, e.g. from a previous run's record file.
    pub fn with_records(self, records: impl IntoIterator<Item = AnnotationRecord>) -> Self {
        {
            let mut map = self.records.lock().expect("cache lock");
            for r in records {
                map.insert(r.fingerprint.clone(), r);
            }
        }
        self
    }

    pub fn inner(&self) -> &A {
        &self.inner
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<A: Annotator> Annotator for CachedAnnotator<A> {
    fn annotator_id(&self) -> String {
        self.inner.annotator_id()
    }

    fn max_in_flight(&self) -> Option<usize> {
        self.inner.max_in_flight()
    }

    fn annotate(&self, request: &AnnotationRequest) -> Result<AnnotationRecord, AnnotationError> {
        let key = request.fingerprint(&self.inner.annotator_id());
        if let Some(r) = self.records.lock().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(r.clone());
        }
        // Not held across the call, so concurrent misses may both compute; the
        // first insert wins and both callers see equal records.
        let record = self.inner.annotate(request)?;
        let mut map = self.records.lock().expect("cache lock");
        Ok(map.entry(key).or_insert(record).clone())
    }
}
