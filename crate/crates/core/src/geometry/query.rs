use crate::error::{Error, Result};

/// Query positions with the signed distances to a low-frequency observation
/// and to its full-frequency coverage. Stored in single precision, which is
/// what the network consumes and what batch files hold.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBatch {
    pub shape_id: String,
    pub observation_id: u32,
    pub queries: Vec<[f32; 3]>,
    pub sdf_low: Vec<f32>,
    pub sdf_full: Vec<f32>,
}

impl QueryBatch {
    pub fn new(
        shape_id: impl Into<String>,
        observation_id: u32,
        queries: Vec<[f32; 3]>,
        sdf_low: Vec<f32>,
        sdf_full: Vec<f32>,
    ) -> Result<Self> {
        if queries.len() != sdf_low.len() || queries.len() != sdf_full.len() {
            return Err(Error::invalid(format!(
                "query batch lengths differ: {} queries, {} low, {} full",
                queries.len(),
                sdf_low.len(),
                sdf_full.len()
            )));
        }
        let finite = queries
            .iter()
            .flatten()
            .chain(&sdf_low)
            .chain(&sdf_full)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("query batch holds non-finite values"));
        }
        Ok(Self {
            shape_id: shape_id.into(),
            observation_id,
            queries,
            sdf_low,
            sdf_full,
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}
