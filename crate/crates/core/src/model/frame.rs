//! Objective and gradients for a single frame.

use super::loss::{prior_slope, prior_value, sgn, LossTerms, PriorMap};
use super::{Decomposition, FrameVariables, Numod};
use crate::error::{NumodError, Result};
use crate::nn::GfcnParams;
use crate::sequence::Mask;

/// One frame's data: the input image, its invariant image and the invariant
/// image's standard deviation (the `sigma` of the prior map).
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a> {
    pub input: &'a [f64],
    pub invariant: &'a [f64],
    pub sigma: f64,
}

/// Gradient of one frame's objective with respect to its own variables
/// (`u1 | u2 | c`, same layout as [`FrameVariables`]).
#[derive(Debug, Clone)]
pub struct FrameGradients {
    pub vars: Vec<f64>,
}

fn check_dims(model: &Numod, input: &FrameInput<'_>, vars: &FrameVariables) -> Result<()> {
    let m = model.image_len();
    let p = model.pixels();
    if input.input.len() != m || input.invariant.len() != p {
        return Err(NumodError::DimensionMismatch(format!(
            "frame has {} values and invariant {}, model expects {m} and {p}",
            input.input.len(),
            input.invariant.len()
        )));
    }
    if vars.latent != model.config.latent || vars.values.len() != 2 * vars.latent + m {
        return Err(NumodError::DimensionMismatch(
            "frame variables do not match the model".into(),
        ));
    }
    Ok(())
}

/// Evaluates the data terms of one frame (no weight decay) and, optionally,
/// their gradients.
///
/// Network gradients are accumulated into `net_grads` when given; frame
/// variable gradients are returned when `want_var_grads` is set.
pub fn evaluate_frame(
    model: &Numod,
    input: &FrameInput<'_>,
    vars: &FrameVariables,
    net_grads: Option<(&mut GfcnParams, &mut GfcnParams)>,
    want_var_grads: bool,
) -> Result<(LossTerms, Option<FrameGradients>)> {
    check_dims(model, input, vars)?;
    let ch = model.channels;
    let kind = model.config.prior;
    let sigma = input.sigma;
    let cache1 = model.net1.forward(vars.u1())?;
    let cache2 = model.net2.forward(vars.u2())?;
    let b = &cache1.output;
    let b_inv = &cache2.output;
    let c = vars.c();

    let mut terms = LossTerms::default();
    let want_grads = want_var_grads || net_grads.is_some();

    let p = model.pixels();
    let mut prior = vec![0.0; p];
    let mut s_inv = vec![0.0; p];
    for k in 0..p {
        let s = input.invariant[k] - b_inv[k];
        s_inv[k] = s;
        prior[k] = prior_value(kind, s, sigma, model.config.prior_offset);
        terms.reconst += s.abs();
    }

    let m = model.image_len();
    let mut grad_b = if want_grads { vec![0.0; m] } else { Vec::new() };
    let mut grad_c = if want_grads { vec![0.0; m] } else { Vec::new() };
    let mut grad_prior = if want_grads { vec![0.0; p] } else { Vec::new() };
    for j in 0..m {
        let k = j / ch;
        let mk = prior[k];
        let s = input.input[j] - b[j];
        let f = s - c[j];
        terms.reconst += s.abs();
        terms.decomp += mk * c[j].abs() + (1.0 - mk) * f.abs();
        if want_grads {
            // C enters the objective directly through M|C| and, via F = S - C,
            // through (1 - M)|F|. B enters through |S| and through F.
            let sf = sgn(f);
            grad_b[j] = -sgn(s) - (1.0 - mk) * sf;
            grad_c[j] = mk * sgn(c[j]) - (1.0 - mk) * sf;
            grad_prior[k] += c[j].abs() - f.abs();
        }
    }
    if !want_grads {
        return Ok((terms, None));
    }

    let grad_b_inv: Vec<f64> = (0..p)
        .map(|k| -sgn(s_inv[k]) - grad_prior[k] * prior_slope(kind, s_inv[k], sigma, prior[k]))
        .collect();

    let (g1, g2) = match net_grads {
        Some((g1, g2)) => (Some(g1), Some(g2)),
        None => (None, None),
    };
    let grad_u1 = model.net1.backward_into(&cache1, &grad_b, g1)?;
    let grad_u2 = model.net2.backward_into(&cache2, &grad_b_inv, g2)?;
    let grads = want_var_grads.then(|| {
        let mut v = Vec::with_capacity(vars.values.len());
        v.extend_from_slice(&grad_u1);
        v.extend_from_slice(&grad_u2);
        v.extend_from_slice(&grad_c);
        FrameGradients { vars: v }
    });
    Ok((terms, grads))
}

pub(super) fn decompose(
    model: &Numod,
    input: &FrameInput<'_>,
    vars: &FrameVariables,
) -> Result<Decomposition> {
    check_dims(model, input, vars)?;
    let b_img = model.net1.forward(vars.u1())?.output;
    let b_inv = model.net2.forward(vars.u2())?.output;
    let s_inv: Vec<f64> = input
        .invariant
        .iter()
        .zip(&b_inv)
        .map(|(i, b)| i - b)
        .collect();
    let prior = PriorMap {
        values: s_inv
            .iter()
            .map(|&s| {
                prior_value(
                    model.config.prior,
                    s,
                    input.sigma,
                    model.config.prior_offset,
                )
            })
            .collect(),
        sigma: input.sigma,
    };
    let s_img: Vec<f64> = input.input.iter().zip(&b_img).map(|(i, b)| i - b).collect();
    let c_img = vars.c().to_vec();
    let f_img = s_img.iter().zip(&c_img).map(|(s, c)| s - c).collect();
    Ok(Decomposition {
        b_img,
        c_img,
        f_img,
        s_img,
        b_inv,
        prior,
        mask: Mask::zeros(model.width, model.height),
    })
}
