use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{log_sigmoid, sigmoid, LogDensity, TargetModel};

pub const N_STUDENTS: usize = 100;
pub const N_QUESTIONS: usize = 400;
pub const N_RESPONSES: usize = 30105;
const DELTA_PRIOR_MEAN: f64 = 0.75;

/// Observed (student, question, answer) triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemResponseDataset {
    pub n_students: usize,
    pub n_questions: usize,
    pub student_ids: Vec<usize>,
    pub question_ids: Vec<usize>,
    pub responses: Vec<u8>,
}

impl ItemResponseDataset {
    pub fn n_responses(&self) -> usize {
        self.responses.len()
    }
}

/// Posterior over `[alpha_1..alpha_S, beta_1..beta_Q, delta]` with
/// `y ~ Bernoulli(sigmoid(alpha_j - beta_k + delta))`.
#[derive(Debug, Clone)]
pub struct ItemResponse {
    data: ItemResponseDataset,
}

impl ItemResponse {
    pub fn new(data: ItemResponseDataset) -> Self {
        ItemResponse { data }
    }

    fn delta_index(&self) -> usize {
        self.data.n_students + self.data.n_questions
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let d = self.delta_index();
        let sq: f64 = theta[..d].iter().map(|t| t * t).sum();
        -0.5 * sq - 0.5 * (theta[d] - DELTA_PRIOR_MEAN).powi(2)
    }
}

impl LogDensity for ItemResponse {
    fn dim(&self) -> usize {
        self.data.n_students + self.data.n_questions + 1
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let s = self.data.n_students;
        let d = self.delta_index();
        let mut lp = self.log_prior(theta);
        for n in 0..self.data.responses.len() {
            let z = theta[self.data.student_ids[n]] - theta[s + self.data.question_ids[n]] + theta[d];
            lp += if self.data.responses[n] == 1 { log_sigmoid(z) } else { log_sigmoid(-z) };
        }
        lp
    }

    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let s = self.data.n_students;
        let d = self.delta_index();
        for (g, t) in grad[..d].iter_mut().zip(theta) {
            *g = -t;
        }
        grad[d] = -(theta[d] - DELTA_PRIOR_MEAN);
        let mut lp = self.log_prior(theta);
        for n in 0..self.data.responses.len() {
            let j = self.data.student_ids[n];
            let k = s + self.data.question_ids[n];
            let z = theta[j] - theta[k] + theta[d];
            let y = self.data.responses[n];
            lp += if y == 1 { log_sigmoid(z) } else { log_sigmoid(-z) };
            let r = y as f64 - sigmoid(z);
            grad[j] += r;
            grad[k] -= r;
            grad[d] += r;
        }
        lp
    }
}

/// Draws abilities, difficulties and the offset from the prior, observes a
/// seeded uniform subset of 30105 of the 100 x 400 (student, question) pairs,
/// and returns the dataset with the posterior conditioned on it.
pub fn generate_item_response(seed: u64) -> (ItemResponseDataset, TargetModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha: Vec<f64> = (0..N_STUDENTS).map(|_| rng.sample(StandardNormal)).collect();
    let beta: Vec<f64> = (0..N_QUESTIONS).map(|_| rng.sample(StandardNormal)).collect();
    let delta = DELTA_PRIOR_MEAN + rng.sample::<f64, _>(StandardNormal);

    let mut pairs = rand::seq::index::sample(&mut rng, N_STUDENTS * N_QUESTIONS, N_RESPONSES).into_vec();
    pairs.sort_unstable();

    let mut student_ids = Vec::with_capacity(N_RESPONSES);
    let mut question_ids = Vec::with_capacity(N_RESPONSES);
    let mut responses = Vec::with_capacity(N_RESPONSES);
    for pair in pairs {
        let (j, k) = (pair / N_QUESTIONS, pair % N_QUESTIONS);
        let p = sigmoid(alpha[j] - beta[k] + delta);
        student_ids.push(j);
        question_ids.push(k);
        responses.push(u8::from(rng.random::<f64>() < p));
    }
    let data = ItemResponseDataset {
        n_students: N_STUDENTS,
        n_questions: N_QUESTIONS,
        student_ids,
        question_ids,
        responses,
    };
    let model = TargetModel::new("item_response", ItemResponse::new(data.clone()));
    (data, model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_shape() {
        let (data, model) = generate_item_response(0);
        assert_eq!(data.n_students, 100);
        assert_eq!(data.n_questions, 400);
        assert_eq!(data.n_responses(), 30105);
        assert_eq!(model.dim(), 501);
        assert!(data.student_ids.iter().all(|&j| j < 100));
        assert!(data.question_ids.iter().all(|&k| k < 400));
        let mut seen: Vec<_> = data.student_ids.iter().zip(&data.question_ids).collect();
        seen.dedup();
        assert_eq!(seen.len(), 30105, "pairs are observed at most once");
    }

    #[test]
    fn generation_is_a_function_of_seed() {
        assert_eq!(generate_item_response(11).0, generate_item_response(11).0);
        assert_ne!(generate_item_response(11).0, generate_item_response(12).0);
    }
}
