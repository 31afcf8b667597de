//! Path loss, Rician fading, surface operators and the combined channel.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::environment::{AdjacencyIndicators, Layout};
use crate::error::{Error, Result};
use crate::numerics::{sample_cn01, ComplexMatrix, Rng, C64};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Indoor-hotspot path loss coefficients, distance in meters, frequency in GHz.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PathLossParams {
    pub carrier_freq_ghz: f64,
    pub los_offset: f64,
    pub los_slope: f64,
    pub nlos_slope: f64,
    pub freq_slope: f64,
}

impl PathLossParams {
    pub fn new(carrier_freq_ghz: f64) -> Self {
        Self {
            carrier_freq_ghz,
            los_offset: 32.4,
            los_slope: 17.3,
            nlos_slope: 31.9,
            freq_slope: 20.0,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_freq_ghz * 1e9)
    }
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self::new(6.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    LoS,
    NLoS,
}

pub fn path_loss_db(kind: LinkKind, distance_m: f64, params: &PathLossParams) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::Domain(format!("distance {distance_m} m")));
    }
    if !(params.carrier_freq_ghz > 0.0) {
        return Err(Error::Domain(format!(
            "carrier frequency {} GHz",
            params.carrier_freq_ghz
        )));
    }
    let slope = match kind {
        LinkKind::LoS => params.los_slope,
        LinkKind::NLoS => params.nlos_slope,
    };
    Ok(params.los_offset
        + slope * distance_m.log10()
        + params.freq_slope * params.carrier_freq_ghz.log10())
}

/// Linear amplitude gain `10^(-PL/20)`.
pub fn path_gain_amplitude(kind: LinkKind, distance_m: f64, params: &PathLossParams) -> Result<f64> {
    Ok(10f64.powf(-path_loss_db(kind, distance_m, params)? / 20.0))
}

/// Element positions (relative to the array reference point) and wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub offsets: Vec<[f64; 3]>,
    pub wavelength: f64,
}

impl ArrayGeometry {
    /// Uniform linear array along x with the given spacing.
    pub fn linear(elements: usize, spacing: f64, wavelength: f64) -> Self {
        Self {
            offsets: (0..elements).map(|m| [m as f64 * spacing, 0.0, 0.0]).collect(),
            wavelength,
        }
    }

    /// Planar grid spanned by the horizontal `tangent` and the vertical axis.
    /// Element `m = v * horizontal + h`.
    pub fn planar(
        horizontal: usize,
        vertical: usize,
        spacing_h: f64,
        spacing_v: f64,
        tangent: [f64; 2],
        wavelength: f64,
    ) -> Self {
        let mut offsets = Vec::with_capacity(horizontal * vertical);
        for v in 0..vertical {
            for h in 0..horizontal {
                let a = h as f64 * spacing_h;
                offsets.push([a * tangent[0], a * tangent[1], v as f64 * spacing_v]);
            }
        }
        Self {
            offsets,
            wavelength,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Unit-modulus array response; entry `m` has phase `2π/λ · <offset_m, direction>`.
pub fn steering_vector(geometry: &ArrayGeometry, direction: [f64; 3]) -> Vec<C64> {
    let k = 2.0 * PI / geometry.wavelength;
    geometry
        .offsets
        .iter()
        .map(|o| {
            let phase = k * (o[0] * direction[0] + o[1] * direction[1] + o[2] * direction[2]);
            C64::from_polar(1.0, phase)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Forward,
    Backward,
}

/// Energy-splitting coefficients of one surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCoefficients {
    pub beta_f: Vec<f64>,
    pub beta_b: Vec<f64>,
    pub theta_f: Vec<f64>,
    pub theta_b: Vec<f64>,
}

impl SurfaceCoefficients {
    pub fn len(&self) -> usize {
        self.beta_f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_f.is_empty()
    }
}

/// Amplitudes and phases of every surface element on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct StarRisState {
    pub surfaces: Vec<SurfaceCoefficients>,
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

impl StarRisState {
    /// Every element with forward amplitude `beta_f` and both phases `theta`.
    pub fn uniform(surfaces: usize, elements: usize, beta_f: f64, theta: f64) -> Self {
        let beta_f = beta_f.clamp(0.0, 1.0);
        let theta = wrap_phase(theta);
        let coeffs = SurfaceCoefficients {
            beta_f: vec![beta_f; elements],
            beta_b: vec![1.0 - beta_f; elements],
            theta_f: vec![theta; elements],
            theta_b: vec![theta; elements],
        };
        Self {
            surfaces: vec![coeffs; surfaces],
        }
    }

    pub fn num_surfaces(&self) -> usize {
        self.surfaces.len()
    }

    pub fn elements(&self) -> usize {
        self.surfaces.first().map_or(0, |s| s.len())
    }

    /// Diagonal of the side-`side` operator of surface `l`.
    pub fn phi_diagonal(&self, l: usize, side: Side) -> Vec<C64> {
        let s = &self.surfaces[l];
        let (beta, theta) = match side {
            Side::Forward => (&s.beta_f, &s.theta_f),
            Side::Backward => (&s.beta_b, &s.theta_b),
        };
        beta.iter()
            .zip(theta)
            .map(|(&b, &t)| C64::from_polar(b.sqrt(), t))
            .collect()
    }

    /// Sum of amplitudes per side of surface `l`: `(Σβ^F, Σβ^B)`.
    pub fn amplitude_sums(&self, l: usize) -> (f64, f64) {
        let s = &self.surfaces[l];
        (s.beta_f.iter().sum(), s.beta_b.iter().sum())
    }
}

/// `M × M` diagonal operator of surface `l` on `side`.
pub fn phi_matrix(state: &StarRisState, l: usize, side: Side) -> ComplexMatrix {
    let diag = state.phi_diagonal(l, side);
    let mut m = ComplexMatrix::zeros(diag.len(), diag.len());
    for (i, z) in diag.into_iter().enumerate() {
        m[(i, i)] = z;
    }
    m
}

/// Small-scale plus large-scale channel coefficients of one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// AP → user, `N_b × 1` per user.
    pub h_u: Vec<ComplexMatrix>,
    /// AP → surface, `N_b × M` per surface.
    pub g_l: Vec<ComplexMatrix>,
    /// Surface → user, `M × 1`, indexed `[l][u]`.
    pub g_l_u: Vec<Vec<ComplexMatrix>>,
    pub rician_kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub path_loss: PathLossParams,
    pub rician_kappa: f64,
    pub ap_antennas: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            path_loss: PathLossParams::default(),
            rician_kappa: 3.0,
            ap_antennas: 4,
        }
    }
}

fn distance3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn direction3(from: [f64; 3], to: [f64; 3]) -> [f64; 3] {
    let d = distance3(from, to);
    [(to[0] - from[0]) / d, (to[1] - from[1]) / d, (to[2] - from[2]) / d]
}

fn user_point(p: [f64; 2]) -> [f64; 3] {
    [p[0], p[1], 0.0]
}

pub fn ap_array(params: &ChannelParams) -> ArrayGeometry {
    let lambda = params.path_loss.wavelength();
    ArrayGeometry::linear(params.ap_antennas, lambda / 2.0, lambda)
}

pub fn surface_array(layout: &Layout, l: usize, params: &ChannelParams) -> ArrayGeometry {
    let n = layout.forward_normal(l);
    let g = layout.elements;
    ArrayGeometry::planar(
        g.horizontal,
        g.vertical,
        g.spacing_h,
        g.spacing_v,
        [-n[1], n[0]],
        params.path_loss.wavelength(),
    )
}

/// Propagation phase `e^{-j 2π d / λ}`.
fn propagation(distance: f64, wavelength: f64) -> C64 {
    C64::from_polar(1.0, -2.0 * PI * distance / wavelength)
}

struct LinkGeometry {
    amplitude: f64,
    los: ComplexMatrix,
}

fn ap_user_link(
    layout: &Layout,
    adjacency: &AdjacencyIndicators,
    params: &ChannelParams,
    u: usize,
) -> Result<LinkGeometry> {
    let ap = ap_array(params);
    let p = user_point(layout.mus[u]);
    let d = distance3(layout.ap, p);
    let kind = if adjacency.c_b_u[u] {
        LinkKind::LoS
    } else {
        LinkKind::NLoS
    };
    let phase = propagation(d, ap.wavelength);
    let a = steering_vector(&ap, direction3(layout.ap, p));
    Ok(LinkGeometry {
        amplitude: path_gain_amplitude(kind, d, &params.path_loss)?,
        los: ComplexMatrix::column(a.into_iter().map(|z| z * phase).collect())?,
    })
}

fn ap_surface_link(
    layout: &Layout,
    adjacency: &AdjacencyIndicators,
    params: &ChannelParams,
    l: usize,
) -> Result<LinkGeometry> {
    let ap = ap_array(params);
    let ris = surface_array(layout, l, params);
    let c = layout.surfaces[l].center;
    let d = distance3(layout.ap, c);
    let kind = if adjacency.c_b_l[l] {
        LinkKind::LoS
    } else {
        LinkKind::NLoS
    };
    let phase = propagation(d, ap.wavelength);
    let depart = steering_vector(&ap, direction3(layout.ap, c));
    let arrive = steering_vector(&ris, direction3(c, layout.ap));
    let los = ComplexMatrix::from_fn(ap.len(), ris.len(), |i, m| phase * depart[i] * arrive[m]);
    Ok(LinkGeometry {
        amplitude: path_gain_amplitude(kind, d, &params.path_loss)?,
        los,
    })
}

fn surface_user_link(
    layout: &Layout,
    adjacency: &AdjacencyIndicators,
    params: &ChannelParams,
    l: usize,
    u: usize,
) -> Result<LinkGeometry> {
    let ris = surface_array(layout, l, params);
    let c = layout.surfaces[l].center;
    let p = user_point(layout.mus[u]);
    let d = distance3(c, p);
    let kind = if adjacency.c_lf_u[l][u] || adjacency.c_lb_u[l][u] {
        LinkKind::LoS
    } else {
        LinkKind::NLoS
    };
    let phase = propagation(d, ris.wavelength);
    let a = steering_vector(&ris, direction3(c, p));
    Ok(LinkGeometry {
        amplitude: path_gain_amplitude(kind, d, &params.path_loss)?,
        los: ComplexMatrix::column(a.into_iter().map(|z| z * phase).collect())?,
    })
}

fn rician(link: &LinkGeometry, nlos: &ComplexMatrix, kappa: f64) -> ComplexMatrix {
    let (w_los, w_nlos) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (kappa + 1.0)).sqrt(), (1.0 / (kappa + 1.0)).sqrt())
    };
    let a = link.amplitude;
    ComplexMatrix::from_fn(link.los.rows(), link.los.cols(), |r, c| {
        (link.los[(r, c)] * w_los + nlos[(r, c)] * w_nlos) * a
    })
}

fn check_dims(layout: &Layout, adjacency: &AdjacencyIndicators) -> Result<()> {
    if adjacency.num_users() != layout.num_users()
        || adjacency.num_surfaces() != layout.num_surfaces()
    {
        return Err(Error::Shape(format!(
            "adjacency {}x{} for layout with {} surfaces and {} users",
            adjacency.num_surfaces(),
            adjacency.num_users(),
            layout.num_surfaces(),
            layout.num_users()
        )));
    }
    Ok(())
}

/// Draws every link of the deployment. Links with zero adjacency are still
/// drawn (with the NLoS exponent) so the random stream does not depend on
/// visibility; they are masked in [`combined_channel`].
pub fn sample_channels(
    layout: &Layout,
    adjacency: &AdjacencyIndicators,
    params: &ChannelParams,
    rng: &mut Rng,
) -> Result<ChannelRealization> {
    check_dims(layout, adjacency)?;
    if !(params.rician_kappa >= 0.0) {
        return Err(Error::Domain(format!("Rician factor {}", params.rician_kappa)));
    }
    let nb = params.ap_antennas;
    let m = layout.elements_per_surface();
    let kappa = params.rician_kappa;
    let mut h_u = Vec::with_capacity(layout.num_users());
    for u in 0..layout.num_users() {
        let link = ap_user_link(layout, adjacency, params, u)?;
        h_u.push(rician(&link, &sample_cn01(rng, nb, 1), kappa));
    }
    let mut g_l = Vec::with_capacity(layout.num_surfaces());
    for l in 0..layout.num_surfaces() {
        let link = ap_surface_link(layout, adjacency, params, l)?;
        g_l.push(rician(&link, &sample_cn01(rng, nb, m), kappa));
    }
    let mut g_l_u = Vec::with_capacity(layout.num_surfaces());
    for l in 0..layout.num_surfaces() {
        let mut per_user = Vec::with_capacity(layout.num_users());
        for u in 0..layout.num_users() {
            let link = surface_user_link(layout, adjacency, params, l, u)?;
            per_user.push(rician(&link, &sample_cn01(rng, m, 1), kappa));
        }
        g_l_u.push(per_user);
    }
    Ok(ChannelRealization {
        h_u,
        g_l,
        g_l_u,
        rician_kappa: kappa,
    })
}

/// Deterministic line-of-sight part of every link, scaled by path loss.
pub fn los_channels(
    layout: &Layout,
    adjacency: &AdjacencyIndicators,
    params: &ChannelParams,
) -> Result<ChannelRealization> {
    check_dims(layout, adjacency)?;
    let zero_like = |link: &LinkGeometry| {
        rician(
            link,
            &ComplexMatrix::zeros(link.los.rows(), link.los.cols()),
            f64::INFINITY,
        )
    };
    let h_u = (0..layout.num_users())
        .map(|u| ap_user_link(layout, adjacency, params, u).map(|l| zero_like(&l)))
        .collect::<Result<_>>()?;
    let g_l = (0..layout.num_surfaces())
        .map(|l| ap_surface_link(layout, adjacency, params, l).map(|g| zero_like(&g)))
        .collect::<Result<_>>()?;
    let g_l_u = (0..layout.num_surfaces())
        .map(|l| {
            (0..layout.num_users())
                .map(|u| surface_user_link(layout, adjacency, params, l, u).map(|g| zero_like(&g)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(ChannelRealization {
        h_u,
        g_l,
        g_l_u,
        rician_kappa: f64::INFINITY,
    })
}

/// End-to-end channel `ĥ_u` of user `u` (`N_b × 1`).
pub fn combined_channel(
    realization: &ChannelRealization,
    adjacency: &AdjacencyIndicators,
    state: &StarRisState,
    u: usize,
) -> Result<ComplexMatrix> {
    let nb = realization.h_u[u].rows();
    let mut acc = if adjacency.c_b_u[u] {
        realization.h_u[u].clone()
    } else {
        ComplexMatrix::zeros(nb, 1)
    };
    if state.num_surfaces() != realization.g_l.len() {
        return Err(Error::Shape(format!(
            "{} surface states for {} surfaces",
            state.num_surfaces(),
            realization.g_l.len()
        )));
    }
    for l in 0..realization.g_l.len() {
        if !adjacency.c_b_l[l] {
            continue;
        }
        for (side, active) in [
            (Side::Forward, adjacency.c_lf_u[l][u]),
            (Side::Backward, adjacency.c_lb_u[l][u]),
        ] {
            if !active {
                continue;
            }
            let phi = phi_matrix(state, l, side);
            let reflected = realization.g_l[l].matmul(&phi.matmul(&realization.g_l_u[l][u])?)?;
            acc = acc.add(&reflected)?;
        }
    }
    Ok(acc)
}

pub fn combined_channels(
    realization: &ChannelRealization,
    adjacency: &AdjacencyIndicators,
    state: &StarRisState,
) -> Result<Vec<ComplexMatrix>> {
    (0..realization.h_u.len())
        .map(|u| combined_channel(realization, adjacency, state, u))
        .collect()
}

// Text dump: every float is written as the hex of its IEEE-754 bits.
//
//   starnoma-channels v1
//   dims <N_b> <M> <L> <U>
//   kappa <bits>
//   h <u> <re> <im> ...            (N_b pairs)
//   g <l> <re> <im> ...            (N_b*M pairs, row-major)
//   glu <l> <u> <re> <im> ...      (M pairs)

const DUMP_MAGIC: &str = "starnoma-channels v1";

fn push_entries(line: &mut String, m: &ComplexMatrix) {
    for z in m.as_slice() {
        let _ = write!(line, " {:016x} {:016x}", z.re.to_bits(), z.im.to_bits());
    }
}

fn parse_bits(tok: &str) -> Result<f64> {
    u64::from_str_radix(tok, 16)
        .map(f64::from_bits)
        .map_err(|e| Error::Parse(format!("bad float bits {tok:?}: {e}")))
}

fn parse_entries(toks: &[&str], rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if toks.len() != 2 * rows * cols {
        return Err(Error::Parse(format!(
            "expected {} values, found {}",
            2 * rows * cols,
            toks.len()
        )));
    }
    let data = toks
        .chunks(2)
        .map(|p| Ok(C64::new(parse_bits(p[0])?, parse_bits(p[1])?)))
        .collect::<Result<Vec<_>>>()?;
    ComplexMatrix::new(rows, cols, data)
}

fn parse_index(tok: Option<&&str>) -> Result<usize> {
    tok.ok_or_else(|| Error::Parse("missing index".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad index: {e}")))
}

impl ChannelRealization {
    pub fn ap_antennas(&self) -> usize {
        self.h_u.first().map_or(0, |h| h.rows())
    }

    pub fn elements(&self) -> usize {
        self.g_l.first().map_or(0, |g| g.cols())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{DUMP_MAGIC}");
        let _ = writeln!(
            out,
            "dims {} {} {} {}",
            self.ap_antennas(),
            self.elements(),
            self.g_l.len(),
            self.h_u.len()
        );
        let _ = writeln!(out, "kappa {:016x}", self.rician_kappa.to_bits());
        for (u, h) in self.h_u.iter().enumerate() {
            let mut line = format!("h {u}");
            push_entries(&mut line, h);
            let _ = writeln!(out, "{line}");
        }
        for (l, g) in self.g_l.iter().enumerate() {
            let mut line = format!("g {l}");
            push_entries(&mut line, g);
            let _ = writeln!(out, "{line}");
        }
        for (l, per_user) in self.g_l_u.iter().enumerate() {
            for (u, g) in per_user.iter().enumerate() {
                let mut line = format!("glu {l} {u}");
                push_entries(&mut line, g);
                let _ = writeln!(out, "{line}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(DUMP_MAGIC) {
            return Err(Error::Parse("missing channel dump header".into()));
        }
        let dims: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("dims "))
            .ok_or_else(|| Error::Parse("missing dims line".into()))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| Error::Parse(format!("bad dim: {e}"))))
            .collect::<Result<_>>()?;
        let [nb, m, num_l, num_u] = dims[..] else {
            return Err(Error::Parse("dims needs four values".into()));
        };
        let kappa = lines
            .next()
            .and_then(|l| l.strip_prefix("kappa "))
            .ok_or_else(|| Error::Parse("missing kappa line".into()))
            .and_then(|t| parse_bits(t.trim()))?;
        let mut h_u = vec![None; num_u];
        let mut g_l = vec![None; num_l];
        let mut g_l_u = vec![vec![None; num_u]; num_l];
        for line in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.first().copied() {
                Some("h") => {
                    let u = parse_index(toks.get(1))?;
                    let slot = h_u
                        .get_mut(u)
                        .ok_or_else(|| Error::Parse(format!("user {u} out of range")))?;
                    *slot = Some(parse_entries(&toks[2..], nb, 1)?);
                }
                Some("g") => {
                    let l = parse_index(toks.get(1))?;
                    let slot = g_l
                        .get_mut(l)
                        .ok_or_else(|| Error::Parse(format!("surface {l} out of range")))?;
                    *slot = Some(parse_entries(&toks[2..], nb, m)?);
                }
                Some("glu") => {
                    let l = parse_index(toks.get(1))?;
                    let u = parse_index(toks.get(2))?;
                    let slot = g_l_u
                        .get_mut(l)
                        .and_then(|v| v.get_mut(u))
                        .ok_or_else(|| Error::Parse(format!("link ({l},{u}) out of range")))?;
                    *slot = Some(parse_entries(&toks[3..], m, 1)?);
                }
                other => return Err(Error::Parse(format!("unknown record {other:?}"))),
            }
        }
        let missing = || Error::Parse("incomplete channel dump".into());
        Ok(ChannelRealization {
            h_u: h_u.into_iter().map(|x| x.ok_or_else(missing)).collect::<Result<_>>()?,
            g_l: g_l.into_iter().map(|x| x.ok_or_else(missing)).collect::<Result<_>>()?,
            g_l_u: g_l_u
                .into_iter()
                .map(|v| v.into_iter().map(|x| x.ok_or_else(missing)).collect())
                .collect::<Result<_>>()?,
            rician_kappa: kappa,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{compute_adjacency, verification_layout};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn path_loss_values() {
        let p = PathLossParams::new(6.0);
        let f = 20.0 * 6f64.log10();
        assert!((path_loss_db(LinkKind::LoS, 1.0, &p).unwrap() - (32.4 + f)).abs() < 1e-12);
        assert!((path_loss_db(LinkKind::LoS, 1.0, &p).unwrap() - 47.963).abs() < 1e-3);
        assert!((path_loss_db(LinkKind::LoS, 10.0, &p).unwrap() - 65.263).abs() < 1e-3);
        assert!((path_loss_db(LinkKind::NLoS, 10.0, &p).unwrap() - 79.863).abs() < 1e-3);
        assert!(path_loss_db(LinkKind::LoS, 0.0, &p).is_err());
        assert!(path_loss_db(LinkKind::NLoS, -1.0, &p).is_err());
    }

    #[test]
    fn path_loss_is_monotone() {
        let mut last = f64::NEG_INFINITY;
        for i in 1..50 {
            let v = path_loss_db(LinkKind::NLoS, i as f64 * 0.7, &PathLossParams::new(6.0)).unwrap();
            assert!(v > last);
            last = v;
        }
        let lo = path_loss_db(LinkKind::LoS, 3.0, &PathLossParams::new(2.4)).unwrap();
        let hi = path_loss_db(LinkKind::LoS, 3.0, &PathLossParams::new(6.0)).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn steering_cases() {
        let ula = ArrayGeometry::linear(4, 0.5, 1.0);
        for z in steering_vector(&ula, [0.0, 1.0, 0.0]) {
            assert!((z - c(1.0, 0.0)).norm() < 1e-15);
        }
        let single = ArrayGeometry::linear(1, 0.5, 1.0);
        assert_eq!(steering_vector(&single, [1.0, 0.0, 0.0]), vec![c(1.0, 0.0)]);
        let endfire = steering_vector(&ula, [1.0, 0.0, 0.0]);
        for (m, z) in endfire.iter().enumerate() {
            let expect = C64::from_polar(1.0, m as f64 * PI);
            assert!((z - expect).norm() < 1e-12);
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_cases() {
        let state = StarRisState::uniform(1, 3, 1.0, 0.0);
        assert_eq!(phi_matrix(&state, 0, Side::Forward), ComplexMatrix::identity(3));

        let half = StarRisState::uniform(1, 2, 0.5, PI / 2.0);
        let phi = phi_matrix(&half, 0, Side::Forward);
        for i in 0..2 {
            assert!((phi[(i, i)] - c(0.0, 0.5f64.sqrt())).norm() < 1e-15);
        }
        assert_eq!(phi[(0, 1)], c(0.0, 0.0));

        let mut rng = Rng::new(3);
        let mut s = StarRisState::uniform(1, 6, 0.5, 0.0);
        for m in 0..6 {
            let b = rng.uniform();
            s.surfaces[0].beta_f[m] = b;
            s.surfaces[0].beta_b[m] = 1.0 - b;
            s.surfaces[0].theta_f[m] = rng.uniform() * 2.0 * PI;
        }
        let f = phi_matrix(&s, 0, Side::Forward);
        let b = phi_matrix(&s, 0, Side::Backward);
        for i in 0..6 {
            assert!((f[(i, i)].norm_sqr() + b[(i, i)].norm_sqr() - 1.0).abs() < 1e-15);
            assert!(f[(i, i)].norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn wrap_phase_range() {
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert_eq!(wrap_phase(-1e-18), 0.0);
        assert!(wrap_phase(-0.5) > 0.0 && wrap_phase(-0.5) < 2.0 * PI);
    }

    fn fixture() -> (Layout, AdjacencyIndicators, ChannelParams) {
        let layout = verification_layout();
        let adj = compute_adjacency(&layout).unwrap();
        (layout, adj, ChannelParams::default())
    }

    #[test]
    fn huge_kappa_is_los() {
        let (layout, adj, mut params) = fixture();
        params.rician_kappa = 1e12;
        let drawn = sample_channels(&layout, &adj, &params, &mut Rng::new(1)).unwrap();
        let los = los_channels(&layout, &adj, &params).unwrap();
        let check = |a: &ComplexMatrix, b: &ComplexMatrix| {
            let diff = a.add(&b.scale(c(-1.0, 0.0))).unwrap().frobenius_norm();
            assert!(diff <= 1e-5 * b.frobenius_norm());
        };
        for (a, b) in drawn.h_u.iter().zip(&los.h_u) {
            check(a, b);
        }
        for (a, b) in drawn.g_l.iter().zip(&los.g_l) {
            check(a, b);
        }
        for (a, b) in drawn.g_l_u.iter().flatten().zip(los.g_l_u.iter().flatten()) {
            check(a, b);
        }
    }

    #[test]
    fn zero_kappa_is_pure_nlos() {
        let (layout, adj, mut params) = fixture();
        params.rician_kappa = 0.0;
        let drawn = sample_channels(&layout, &adj, &params, &mut Rng::new(5)).unwrap();
        // Replay the stream: the first draw is h_0's NLoS vector.
        let mut rng = Rng::new(5);
        let nlos = sample_cn01(&mut rng, params.ap_antennas, 1);
        let amp = path_gain_amplitude(LinkKind::LoS,
            distance3(layout.ap, user_point(layout.mus[0])), &params.path_loss).unwrap();
        for i in 0..params.ap_antennas {
            assert!((drawn.h_u[0][(i, 0)] - nlos[(i, 0)] * amp).norm() < 1e-18);
        }
    }

    #[test]
    fn mean_power_matches_path_loss() {
        let (layout, adj, params) = fixture();
        let draws = 10_000;
        let mut rng = Rng::new(77);
        let mut acc = 0.0;
        for _ in 0..draws {
            let r = sample_channels(&layout, &adj, &params, &mut rng).unwrap();
            acc += r.h_u[0][(0, 0)].norm_sqr();
        }
        let d = distance3(layout.ap, user_point(layout.mus[0]));
        let gain = path_gain_amplitude(LinkKind::LoS, d, &params.path_loss).unwrap().powi(2);
        let mean = acc / draws as f64;
        assert!((mean / gain - 1.0).abs() < 0.03, "{}", mean / gain);
    }

    fn random_state(rng: &mut Rng, surfaces: usize, m: usize) -> StarRisState {
        let mut s = StarRisState::uniform(surfaces, m, 0.5, 0.0);
        for surf in &mut s.surfaces {
            for i in 0..m {
                let b = rng.uniform();
                surf.beta_f[i] = b;
                surf.beta_b[i] = 1.0 - b;
                surf.theta_f[i] = rng.uniform() * 2.0 * PI;
                surf.theta_b[i] = rng.uniform() * 2.0 * PI;
            }
        }
        s
    }

    #[test]
    fn combined_trivial_cases() {
        let (layout, adj, params) = fixture();
        let r = sample_channels(&layout, &adj, &params, &mut Rng::new(2)).unwrap();
        let state = StarRisState::uniform(2, layout.elements_per_surface(), 0.5, 0.0);

        let mut none = adj.clone();
        none.c_b_u.iter_mut().for_each(|x| *x = false);
        none.c_b_l.iter_mut().for_each(|x| *x = false);
        assert!(combined_channel(&r, &none, &state, 0).unwrap().is_zero());

        let mut direct_only = adj.clone();
        direct_only.c_b_u[0] = true;
        direct_only.c_b_l.iter_mut().for_each(|x| *x = false);
        assert_eq!(combined_channel(&r, &direct_only, &state, 0).unwrap(), r.h_u[0]);
    }

    #[test]
    fn combined_matches_scalar_expansion() {
        let (layout, adj, params) = fixture();
        let mut rng = Rng::new(99);
        for _ in 0..20 {
            let r = sample_channels(&layout, &adj, &params, &mut rng).unwrap();
            let state = random_state(&mut rng, 2, layout.elements_per_surface());
            for u in 0..layout.num_users() {
                let got = combined_channel(&r, &adj, &state, u).unwrap();
                for i in 0..params.ap_antennas {
                    let mut expect = if adj.c_b_u[u] { r.h_u[u][(i, 0)] } else { c(0.0, 0.0) };
                    for l in 0..2 {
                        if !adj.c_b_l[l] {
                            continue;
                        }
                        let s = &state.surfaces[l];
                        for m in 0..layout.elements_per_surface() {
                            let g = r.g_l[l][(i, m)] * r.g_l_u[l][u][(m, 0)];
                            if adj.c_lf_u[l][u] {
                                expect += g * s.beta_f[m].sqrt() * c(s.theta_f[m].cos(), s.theta_f[m].sin());
                            }
                            if adj.c_lb_u[l][u] {
                                expect += g * s.beta_b[m].sqrt() * c(s.theta_b[m].cos(), s.theta_b[m].sin());
                            }
                        }
                    }
                    let scale = expect.norm().max(1e-300);
                    assert!((got[(i, 0)] - expect).norm() / scale < 1e-10);
                }
            }
        }
    }

    #[test]
    fn combined_is_linear_in_phi_entries() {
        let (layout, adj, params) = fixture();
        let mut rng = Rng::new(12);
        let r = sample_channels(&layout, &adj, &params, &mut rng).unwrap();
        // user 4 sits behind surface 1 only: ĥ = g Φ g_lu, linear in each diagonal entry
        let u = 4;
        let m = layout.elements_per_surface();
        let (a, b) = (random_state(&mut rng, 2, m), random_state(&mut rng, 2, m));
        // superposition via explicit diagonal operators
        let phi_a = phi_matrix(&a, 0, Side::Forward);
        let phi_b = phi_matrix(&b, 0, Side::Forward);
        let sum = phi_a.add(&phi_b).unwrap();
        let via = |phi: &ComplexMatrix| r.g_l[0].matmul(&phi.matmul(&r.g_l_u[0][u]).unwrap()).unwrap();
        let lhs = via(&sum);
        let rhs = via(&phi_a).add(&via(&phi_b)).unwrap();
        let diff = lhs.add(&rhs.scale(c(-1.0, 0.0))).unwrap().frobenius_norm();
        assert!(diff <= 1e-10 * lhs.frobenius_norm());
        assert!(adj.c_lf_u[0][u] || adj.c_lb_u[0][u]);
    }

    #[test]
    fn dump_round_trip_is_bit_exact() {
        let (layout, adj, params) = fixture();
        let r = sample_channels(&layout, &adj, &params, &mut Rng::new(8)).unwrap();
        let text = r.to_text();
        let back = ChannelRealization::from_text(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_text(), text);
        assert!(ChannelRealization::from_text("garbage").is_err());
    }
}
