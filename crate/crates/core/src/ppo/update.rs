use rand::seq::SliceRandom;

use super::buffer::{normalize, Gae, RolloutBuffer};
use super::critic;
use super::policy::{entropy, entropy_grad_logits, log_prob_from_logits, log_prob_grad_logits, softmax};
use super::{CriticGradient, PpoConfig};
use crate::approximator::Approximator;
use crate::error::{Error, Result};
use crate::optim::{clip_in_place, Direction, OptimizerState};
use crate::par::{self, Exec};
use crate::param::Gradient;
use crate::returns::Trajectory;
use crate::rng::Rng;

/// Networks and optimiser states of an actor-critic learner.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub policy: super::CategoricalPolicy,
    pub v: Approximator,
    /// Auxiliary `ĥ`, present for Gradient PPO.
    pub h: Option<Approximator>,
    pub opt_policy: OptimizerState,
    pub opt_v: OptimizerState,
    pub opt_h: Option<OptimizerState>,
}

/// Per-update averages.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// Mean `|δ^λ|` (Gradient PPO) or mean `|Â|` (PPO) before normalisation.
    pub mean_abs_advantage: f64,
    pub minibatches: usize,
}

impl Diagnostics {
    fn accumulate(&mut self, other: &Diagnostics) {
        self.policy_loss += other.policy_loss;
        self.value_loss += other.value_loss;
        self.entropy += other.entropy;
        self.approx_kl += other.approx_kl;
        self.clip_fraction += other.clip_fraction;
        self.grad_norm += other.grad_norm;
        self.mean_abs_advantage += other.mean_abs_advantage;
        self.minibatches += 1;
    }

    fn finish(mut self) -> Self {
        let n = self.minibatches.max(1) as f64;
        self.policy_loss /= n;
        self.value_loss /= n;
        self.entropy /= n;
        self.approx_kl /= n;
        self.clip_fraction /= n;
        self.grad_norm /= n;
        self.mean_abs_advantage /= n;
        self
    }
}

// slots appended to accumulated gradients
const D_POLICY: usize = 0;
const D_VALUE: usize = 1;
const D_ENTROPY: usize = 2;
const D_KL: usize = 3;
const D_CLIP: usize = 4;
const N_DIAG: usize = 5;
const CHUNK: usize = 16;

fn check_finite(g: &[f64], context: &str) -> Result<()> {
    match g.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            context: context.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

/// Clipped surrogate and entropy terms for one sample, added into the
/// policy gradient slice `acc` and diagnostics `diag`, scaled by `1/n`.
#[allow(clippy::too_many_arguments)]
fn policy_sample(
    net: &Approximator,
    obs: &[f64],
    action: usize,
    old_log_prob: f64,
    advantage: f64,
    cfg: &PpoConfig,
    inv_n: f64,
    acc: &mut [f64],
    diag: &mut [f64],
) -> Result<()> {
    let tape = net.forward_tape(obs)?;
    let logits = tape.outputs();
    let probs = softmax(logits);
    let log_prob = log_prob_from_logits(logits, action);
    let log_ratio = log_prob - old_log_prob;
    let ratio = log_ratio.exp();
    let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
    let unclipped_obj = ratio * advantage;
    let clipped_obj = clipped * advantage;
    // d(−min)/d log π flows only through the unclipped branch
    let d_log_prob = if unclipped_obj <= clipped_obj { -unclipped_obj * inv_n } else { 0.0 };
    let mut up = log_prob_grad_logits(&probs, action);
    up.iter_mut().for_each(|g| *g *= d_log_prob);
    if cfg.ent_coef != 0.0 {
        for (u, e) in up.iter_mut().zip(entropy_grad_logits(&probs)) {
            *u -= cfg.ent_coef * inv_n * e;
        }
    }
    net.backward(&tape, &up, acc);
    diag[D_POLICY] -= unclipped_obj.min(clipped_obj) * inv_n;
    diag[D_ENTROPY] += entropy(&probs) * inv_n;
    diag[D_KL] += ((ratio - 1.0) - log_ratio) * inv_n;
    if (ratio - 1.0).abs() > cfg.clip {
        diag[D_CLIP] += inv_n;
    }
    Ok(())
}

/// Baseline PPO: `epochs` passes of shuffled minibatches over the buffer
/// with stale GAE targets.
pub fn ppo_update(cfg: &PpoConfig, buf: &RolloutBuffer, gae: &Gae, ac: &mut ActorCritic, exec: Exec, rng: &mut Rng) -> Result<Diagnostics> {
    let n = buf.len();
    let mb = cfg.minibatch_size;
    if mb == 0 || n % mb != 0 {
        return Err(Error::InvalidArgument(format!(
            "rollout length {n} is not divisible by minibatch size {mb}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut total = Diagnostics::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(mb) {
            let mut adv: Vec<f64> = batch.iter().map(|&j| gae.advantages[j]).collect();
            let mean_abs = adv.iter().map(|a| a.abs()).sum::<f64>() / adv.len() as f64;
            if cfg.normalize_advantages {
                normalize(&mut adv);
            }
            let pp = ac.policy.net.num_params();
            let pv = ac.v.num_params();
            let dim = pp + pv + N_DIAG;
            let inv_n = 1.0 / batch.len() as f64;
            let (policy, v) = (&ac.policy.net, &ac.v);
            let n_chunks = batch.len().div_ceil(CHUNK);
            let partials = par::map_range(exec, n_chunks, |c| -> Result<Vec<f64>> {
                let mut acc = vec![0.0; dim];
                for k in c * CHUNK..((c + 1) * CHUNK).min(batch.len()) {
                    let j = batch[k];
                    let (g_pi, rest) = acc.split_at_mut(pp);
                    let (g_v, diag) = rest.split_at_mut(pv);
                    policy_sample(policy, &buf.obs[j], buf.actions[j], buf.log_probs[j], adv[k], cfg, inv_n, g_pi, diag)?;
                    let tape = v.forward_tape(&buf.obs[j])?;
                    let value = tape.outputs()[0];
                    let target = gae.returns[j];
                    let old = buf.values[j];
                    let unclipped = (value - target).powi(2);
                    let (loss, d_value) = if cfg.clip_value_loss {
                        let vc = old + (value - old).clamp(-cfg.clip, cfg.clip);
                        let clipped = (vc - target).powi(2);
                        if unclipped >= clipped {
                            (unclipped, value - target)
                        } else {
                            let pass = if (value - old).abs() < cfg.clip { 1.0 } else { 0.0 };
                            (clipped, (vc - target) * pass)
                        }
                    } else {
                        (unclipped, value - target)
                    };
                    // 0.5 · loss, weighted by the value coefficient
                    v.backward(&tape, &[cfg.vf_coef * d_value * inv_n], g_v);
                    diag[D_VALUE] += 0.5 * loss * inv_n;
                }
                Ok(acc)
            });
            let mut grad = vec![0.0; dim];
            for p in partials {
                crate::param::axpy(1.0, &p?, &mut grad);
            }
            let (g, diag) = grad.split_at_mut(pp + pv);
            check_finite(g, "PPO gradient")?;
            let norm = clip_in_place(g, cfg.max_grad_norm);
            ac.opt_policy.apply(ac.policy.net.params_mut(), &g[..pp], Direction::Descent)?;
            ac.opt_v.apply(ac.v.params_mut(), &g[pp..], Direction::Descent)?;
            total.accumulate(&Diagnostics {
                policy_loss: diag[D_POLICY],
                value_loss: diag[D_VALUE],
                entropy: diag[D_ENTROPY],
                approx_kl: diag[D_KL],
                clip_fraction: diag[D_CLIP],
                grad_norm: norm,
                mean_abs_advantage: mean_abs,
                minibatches: 0,
            });
        }
    }
    Ok(total.finish())
}

struct SeqPass {
    errors: Vec<f64>,
    h_values: Vec<f64>,
    dw: Gradient,
    dtheta: Gradient,
}

/// Gradient PPO: per minibatch of sequences, TD(λ) errors and their
/// gradients are recomputed with the current critic; the critic and `ĥ`
/// take direct TDRC(λ) steps and the policy a clipped-surrogate step with
/// the recomputed errors as advantages.
pub fn gradient_ppo_update(cfg: &PpoConfig, buf: &RolloutBuffer, ac: &mut ActorCritic, exec: Exec, rng: &mut Rng) -> Result<Diagnostics> {
    let seqs = buf.sequences(cfg.seq_len)?;
    let per_batch = cfg.minibatch_size / cfg.seq_len;
    if per_batch == 0 || cfg.minibatch_size % cfg.seq_len != 0 || seqs.len() % per_batch != 0 {
        return Err(Error::InvalidArgument(format!(
            "minibatch size {} must be a multiple of sequence length {} dividing the rollout",
            cfg.minibatch_size, cfg.seq_len
        )));
    }
    if ac.h.is_none() || ac.opt_h.is_none() {
        return Err(Error::InvalidArgument("Gradient PPO needs an h network and optimiser".into()));
    }
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut total = Diagnostics::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(per_batch) {
            let d = gradient_minibatch(cfg, &seqs, batch, ac, exec)?;
            total.accumulate(&d);
        }
    }
    Ok(total.finish())
}

fn gradient_minibatch(cfg: &PpoConfig, seqs: &[Trajectory], batch: &[usize], ac: &mut ActorCritic, exec: Exec) -> Result<Diagnostics> {
    let h_net = ac.h.as_ref().expect("checked by caller");
    let v = &ac.v;
    let (gamma, lambda) = (cfg.gamma, cfg.lambda);
    let passes = par::map(exec, batch, |&k| -> Result<SeqPass> {
        let traj = &seqs[k];
        let (h_values, h_tapes) = critic::evaluate_h(traj, h_net)?;
        let (dw, errors) = match cfg.critic_gradient {
            CriticGradient::Adjoint => {
                let (dw, eval) = critic::critic_update(traj, v, &h_values, gamma, lambda)?;
                (dw, eval.errors)
            }
            CriticGradient::Recursive => {
                let mut dw = critic::critic_loss_gradient(traj, v, &h_values, gamma, lambda)?;
                dw.scale(-1.0);
                (dw, critic::evaluate_sequence(traj, v, gamma, lambda)?.errors)
            }
        };
        let dtheta = critic::h_update(h_net, &h_tapes, &h_values, &errors, cfg.beta);
        Ok(SeqPass {
            errors,
            h_values,
            dw,
            dtheta,
        })
    });
    let passes = passes.into_iter().collect::<Result<Vec<_>>>()?;
    let n_samples: usize = passes.iter().map(|p| p.errors.len()).sum();
    let inv_n = 1.0 / n_samples as f64;

    // critic and ĥ: minibatch means of the direct updates, ascent
    let mut dw = Gradient::zeros(v.num_params());
    let mut dtheta = Gradient::zeros(h_net.num_params());
    for p in &passes {
        dw.axpy(inv_n, &p.dw);
        dtheta.axpy(inv_n, &p.dtheta);
    }

    // policy: normalised recomputed errors as advantages
    let mut adv: Vec<f64> = passes.iter().flat_map(|p| p.errors.iter().copied()).collect();
    let mean_abs = adv.iter().map(|a| a.abs()).sum::<f64>() * inv_n;
    if cfg.normalize_advantages {
        normalize(&mut adv);
    }
    let pp = ac.policy.net.num_params();
    let dim = pp + N_DIAG;
    let policy = &ac.policy.net;
    let per_seq = cfg.seq_len;
    let partials = par::map_range(exec, batch.len(), |b| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; dim];
        let (g, diag) = acc.split_at_mut(pp);
        for (t, tr) in seqs[batch[b]].transitions().iter().enumerate() {
            let old_log_prob = tr.behavior_prob.ln();
            policy_sample(policy, &tr.state, tr.action, old_log_prob, adv[b * per_seq + t], cfg, inv_n, g, diag)?;
        }
        Ok(acc)
    });
    let mut grad = vec![0.0; dim];
    for p in partials {
        crate::param::axpy(1.0, &p?, &mut grad);
    }
    let (g, diag) = grad.split_at_mut(pp);
    check_finite(g, "Gradient PPO policy gradient")?;
    let norm = clip_in_place(g, cfg.max_grad_norm);
    dw.check_finite("Gradient PPO critic update")?;
    dtheta.check_finite("Gradient PPO h update")?;

    ac.opt_policy.apply(ac.policy.net.params_mut(), g, Direction::Descent)?;
    ac.opt_v.apply(ac.v.params_mut(), &dw, Direction::Ascent)?;
    let (h, opt_h) = (ac.h.as_mut().expect("checked"), ac.opt_h.as_mut().expect("h optimiser"));
    opt_h.apply(h.params_mut(), &dtheta, Direction::Ascent)?;
    let value_loss = passes
        .iter()
        .flat_map(|p| p.errors.iter().zip(&p.h_values).map(|(e, h)| 0.5 * (e - h).powi(2)))
        .sum::<f64>()
        * inv_n;
    Ok(Diagnostics {
        policy_loss: diag[D_POLICY],
        value_loss,
        entropy: diag[D_ENTROPY],
        approx_kl: diag[D_KL],
        clip_fraction: diag[D_CLIP],
        grad_norm: norm,
        mean_abs_advantage: mean_abs,
        minibatches: 0,
    })
}
