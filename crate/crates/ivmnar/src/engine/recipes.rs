//! One reconstruction per identifiable mechanism.
//!
//! Notation inside this module: `f(z,d)` is the fully observed cell vector
//! over y, `yo(z)` the cells with D missing, `dn(z,d)` the cells with Y
//! missing and `nn(z)` the cell with both missing.

use super::linalg::solve_system;
use super::{clamp_nonneg, latent, solve_binary_ratio, strip_stratum, Cx, IdentifyError, JointRoute, Route, Solved};
use crate::model::{empty_table, ComplianceType, DyTable};
use crate::scalar::{sum, Scalar};

type R<T> = Result<T, IdentifyError>;

const NOT_STATED: &str = "no recovery route for the joint law is established for this mechanism";

fn scaled<S: Scalar>(v: &[S], c: &S) -> Vec<S> {
    v.iter().map(|x| x.clone() * c.clone()).collect()
}

fn divided<S: Scalar>(v: &[S], c: &S) -> Vec<S> {
    v.iter().map(|x| x.clone() / c.clone()).collect()
}

fn times<S: Scalar>(v: &[S], w: &[S]) -> Vec<S> {
    v.iter().zip(w).map(|(a, b)| a.clone() * b.clone()).collect()
}

fn plus<S: Scalar>(v: &[S], w: &[S]) -> Vec<S> {
    v.iter().zip(w).map(|(a, b)| a.clone() + b.clone()).collect()
}

fn minus<S: Scalar>(v: &[S], w: &[S]) -> Vec<S> {
    v.iter().zip(w).map(|(a, b)| a.clone() - b.clone()).collect()
}

fn one_plus<S: Scalar>(v: &[S]) -> Vec<S> {
    v.iter().map(|x| S::one() + x.clone()).collect()
}

pub(crate) fn dispatch<S: Scalar>(id: &str, cx: &mut Cx<S>) -> R<Solved<S>> {
    match id {
        "MCAR-Y" => mcar(cx, "R^Y"),
        "MCAR-D" => mcar(cx, "R^D"),
        "1ZD" => outcome_zd(cx),
        "1UD" => outcome_ud(cx),
        "1DY" => outcome_dy(cx),
        "1ZY" => outcome_zy(cx),
        "1UY" => stratum_ratio(cx, false),
        "1Y" => outcome_y(cx),
        "2ZY" => treatment_zy(cx),
        "2UY" => stratum_ratio(cx, true),
        "2DY" => treatment_dy(cx),
        "2UD" => treatment_ud(cx),
        "2ZD" => treatment_zd(cx),
        "2ZU" => treatment_zu(cx),
        "1ZD(+)2UD" => feed_ud_zd(cx),
        "1UD(+)2UD" => subtract(cx, cx.obs.full_table()),
        "1DY(+)2UD" => feed_ud_dy(cx),
        "1ZY(+)2UD" => feed_ud_zy(cx),
        "1UY(+)2UD" => feed_ud_uy(cx),
        "1ZD+2ZD" => sep_zd_zd(cx),
        "1UD+2ZD" => sep_zd_ud(cx),
        "1DY+2ZD" => sep_zd_dy(cx),
        "1ZY+2ZD" => sep_zd_zy(cx),
        "1UY+2ZD" => sep_zd_uy(cx),
        "1ZD+2ZU" => sep_zu_zd(cx),
        "1UD+2ZU" => sep_zu_ud(cx, false),
        "1UY+2ZU" => sep_zu_ud(cx, true),
        "1ZD(+)2Z" => feed_z(cx, FeedZ::Zd),
        "1UD(+)2Z" => feed_z(cx, FeedZ::Ud),
        "1UY(+)2Z" => feed_z(cx, FeedZ::Uy),
        "1DY(+)2Z" => feed_z(cx, FeedZ::Dy),
        "1ZY(+)2Z" => feed_z(cx, FeedZ::Zy),
        "1Z(+)2ZD" => feed_zd_z(cx),
        "1D(+)2ZD" => feed_zd_d(cx),
        "1Y(+)2ZD" => feed_zd_y(cx),
        "1Z(+)2ZU" => feed_zu_z(cx),
        "1U(+)2ZU" => feed_zu_u(cx),
        "1D(+)2ZU" => feed_zu_d(cx),
        "1Y(+)2ZU" => feed_zu_y(cx),
        other => Err(IdentifyError::UnknownMechanism(other.to_string())),
    }
}

/// Checks a reconstructed P(D,Y|Z): nonnegative cells and arms summing to
/// one. Float arms are renormalized; exact arms must sum to one exactly.
fn finish_table<S: Scalar>(cx: &Cx<S>, t: DyTable<S>, joint: JointRoute<S>) -> R<Solved<S>> {
    let mut out = t;
    for (z, arm) in out.iter_mut().enumerate() {
        for cells in arm.iter_mut() {
            for v in cells.iter_mut() {
                *v = cx.nonneg("reconstructed P(D,Y|Z)", v.clone())?;
            }
        }
        let total = sum(&arm[0]) + sum(&arm[1]);
        if S::is_exact() {
            if total != S::one() {
                return Err(IdentifyError::InconsistentObservables(format!(
                    "reconstructed arm z={z} sums to {}",
                    total.render()
                )));
            }
        } else {
            if !total.positive(cx.tol.prob) {
                return Err(IdentifyError::InconsistentObservables(format!("reconstructed arm z={z} is empty")));
            }
            for cells in arm.iter_mut() {
                *cells = divided(cells, &total);
            }
        }
    }
    Ok(Solved { route: Route::Table(out), joint })
}

fn table<S: Scalar>(cx: &Cx<S>, mut cell: impl FnMut(usize, usize) -> Vec<S>) -> DyTable<S> {
    let mut t = empty_table(cx.k());
    for z in 0..2 {
        for d in 0..2 {
            if cx.reach(z, d) {
                t[z][d] = cell(z, d);
            }
        }
    }
    t
}

/// Normalized complier laws (control, treated) from a table proportional
/// within each arm to P(D, Y, observed | Z).
fn complier_laws<S: Scalar>(cx: &mut Cx<S>, t: &DyTable<S>) -> R<(Vec<S>, Vec<S>)> {
    let one = S::one();
    let c0 = strip_stratum(&t[0][0], &t[1][0], &one, &cx.tol)?;
    let c1 = strip_stratum(&t[1][1], &t[0][1], &one, &cx.tol)?;
    let control = cx.normalize("complier mass at D=0", c0)?;
    let treated = cx.normalize("complier mass at D=1", c1)?;
    Ok((control, treated))
}

fn subtract<S: Scalar>(cx: &mut Cx<S>, t: DyTable<S>) -> R<Solved<S>> {
    let (control, treated) = complier_laws(cx, &t)?;
    Ok(Solved { route: Route::Laws { treated, control }, joint: JointRoute::Unavailable(NOT_STATED.into()) })
}

/// Binary complier probabilities from complier cell vectors that carry a
/// response factor depending on y. `scale` corrects the D=0 over D=1 ratio.
fn ratio_route<S: Scalar>(cx: &mut Cx<S>, c0: &[S], c1: &[S], scale: &S, joint: JointRoute<S>) -> R<Solved<S>> {
    let mut r = Vec::with_capacity(2);
    for y in 0..2 {
        cx.positive(format!("complier mass at D=1, Y={}", cx.y(y)), &c1[y])?;
        let ratio = c0[y].clone() / c1[y].clone() * scale.clone();
        cx.note(format!("complier likelihood ratio(y{})", cx.y(y)), &ratio);
        r.push(ratio);
    }
    let solved = solve_binary_ratio(&r[1], &r[0], &cx.tol)?;
    Ok(Solved { route: Route::Ratio(solved), joint })
}

/// Observed share of a cell group: `seen / (seen + hidden)`, or `None` when
/// the group is empty.
fn rate<S: Scalar>(cx: &mut Cx<S>, name: String, seen: S, hidden: S) -> R<Option<S>> {
    let all = seen.clone() + hidden;
    if all.near_zero(cx.tol.prob) {
        return Ok(None);
    }
    let r = cx.ratio(name.clone(), &seen, &all)?;
    cx.note(name, &r);
    Ok(Some(r))
}

fn mcar<S: Scalar>(cx: &mut Cx<S>, ind: &str) -> R<Solved<S>> {
    let mut t = empty_table(cx.k());
    for z in 0..2 {
        let seen = sum(cx.f(z, 0)) + sum(cx.f(z, 1));
        let name = format!("P({ind}=1|Z={z})");
        cx.positive(name.clone(), &seen)?;
        cx.note(name, &seen);
        for d in 0..2 {
            t[z][d] = divided(cx.f(z, d), &seen);
        }
    }
    finish_table(cx, t, JointRoute::FromTable)
}

/// P(R^Y=1 | z, d) (with R^D=1 in the Both regime) for every reachable cell.
fn outcome_rates<S: Scalar>(cx: &mut Cx<S>, suffix: &str) -> R<[[Option<S>; 2]; 2]> {
    let mut out: [[Option<S>; 2]; 2] = Default::default();
    for z in 0..2 {
        for d in 0..2 {
            if cx.reach(z, d) {
                out[z][d] = rate(cx, format!("P(R^Y=1|Z={z},D={d}{suffix})"), sum(cx.f(z, d)), cx.dn(z, d))?;
            }
        }
    }
    Ok(out)
}

fn outcome_zd<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let q = outcome_rates(cx, "")?;
    let t = table(cx, |z, d| match &q[z][d] {
        Some(r) => divided(cx.f(z, d), r),
        None => vec![S::zero(); cx.k()],
    });
    finish_table(cx, t, JointRoute::FromTable)
}

fn outcome_ud<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let t = cx.obs.full_table();
    let (control, treated) = complier_laws(cx, &t)?;
    let joint = joint_outcome_ud(cx, &control, &treated);
    Ok(Solved { route: Route::Laws { treated, control }, joint })
}

fn joint_outcome_ud<S: Scalar>(cx: &Cx<S>, control: &[S], treated: &[S]) -> JointRoute<S> {
    let tol = cx.tol.prob;
    let never = sum(cx.f(1, 0)) + cx.dn(1, 0);
    let always = sum(cx.f(0, 1)) + cx.dn(0, 1);
    let complier = S::one() - never.clone() - always.clone();
    if !complier.positive(tol) {
        return JointRoute::Unavailable("complier share is not positive".into());
    }
    let law = |v: &[S], share: &S, who: &str| -> Result<Vec<S>, String> {
        if share.near_zero(tol) {
            return Ok(Vec::new());
        }
        let total = sum(v);
        if !total.positive(tol) {
            return Err(format!("no {who} outcome is ever observed"));
        }
        Ok(divided(v, &total))
    };
    match (law(cx.f(1, 0), &never, "never-taker"), law(cx.f(0, 1), &always, "always-taker")) {
        (Ok(n), Ok(a)) => JointRoute::Strata(latent(
            [
                (ComplianceType::Always, if always.near_zero(tol) { S::zero() } else { always }),
                (ComplianceType::Complier, complier),
                (ComplianceType::Never, if never.near_zero(tol) { S::zero() } else { never }),
            ],
            a,
            control.to_vec(),
            treated.to_vec(),
            n,
        )),
        (Err(e), _) | (_, Err(e)) => JointRoute::Unavailable(e),
    }
}

/// Positivity of the observed outcome mass at every (d, y).
fn observed_dy<S: Scalar>(cx: &mut Cx<S>, d: usize) -> R<()> {
    for y in 0..cx.k() {
        let mass = (0..2).filter(|&z| cx.reach(z, d)).fold(S::zero(), |acc, z| acc + cx.f(z, d)[y].clone());
        cx.positive(format!("observed mass at D={d}, Y={}", cx.y(y)), &mass)?;
    }
    Ok(())
}

/// Odds η_d(y) solved across arms: rows z, `f(z,d)·η = dn(z,d)`.
fn eta_by_d<S: Scalar>(cx: &mut Cx<S>, d: usize, check: &str, rhs: impl Fn(&Cx<S>, usize) -> S) -> R<Vec<S>> {
    let zs: Vec<usize> = (0..2).filter(|&z| cx.reach(z, d)).collect();
    let rows = zs.iter().map(|&z| cx.f(z, d).to_vec()).collect();
    let b = zs.iter().map(|&z| rhs(cx, z)).collect();
    let eta = cx.solve(check, rows, b)?;
    for (y, v) in eta.iter().enumerate() {
        cx.note(format!("eta_d{d}(y{})", cx.y(y)), v);
    }
    Ok(eta)
}

/// Odds η_z(y) solved across treatment levels: rows d, `f(z,d)·η = dn(z,d)`.
fn eta_by_z<S: Scalar>(cx: &mut Cx<S>, z: usize, check: &str, rhs: impl Fn(&Cx<S>, usize) -> S) -> R<Vec<S>> {
    let ds: Vec<usize> = (0..2).filter(|&d| cx.reach(z, d)).collect();
    let rows = ds.iter().map(|&d| cx.f(z, d).to_vec()).collect();
    let b = ds.iter().map(|&d| rhs(cx, d)).collect();
    let eta = cx.solve(check, rows, b)?;
    for (y, v) in eta.iter().enumerate() {
        cx.note(format!("eta_z{z}(y{})", cx.y(y)), v);
    }
    Ok(eta)
}

/// Odds η(y) shared by every reachable (z, d).
fn eta_pooled<S: Scalar>(cx: &mut Cx<S>, check: &str) -> R<Vec<S>> {
    let cells: Vec<(usize, usize)> =
        (0..2).flat_map(|z| (0..2).map(move |d| (z, d))).filter(|&(z, d)| cx.reach(z, d)).collect();
    let rows = cells.iter().map(|&(z, d)| cx.f(z, d).to_vec()).collect();
    let b = cells.iter().map(|&(z, d)| cx.dn(z, d)).collect();
    let eta = cx.solve(check, rows, b)?;
    for (y, v) in eta.iter().enumerate() {
        cx.note(format!("eta(y{})", cx.y(y)), v);
    }
    Ok(eta)
}

fn outcome_dy<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let mut etas = Vec::new();
    for d in 0..2 {
        observed_dy(cx, d)?;
        etas.push(eta_by_d(cx, d, &format!("Y !⊥ Z | D={d}"), |cx, z| cx.dn(z, d))?);
    }
    let t = table(cx, |z, d| times(cx.f(z, d), &one_plus(&etas[d])));
    finish_table(cx, t, JointRoute::FromTable)
}

fn outcome_zy<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let mut etas = Vec::new();
    for z in 0..2 {
        for y in 0..cx.k() {
            let mass = cx.f(z, 0)[y].clone() + cx.f(z, 1)[y].clone();
            cx.positive(format!("observed mass at Z={z}, Y={}", cx.y(y)), &mass)?;
        }
        etas.push(eta_by_z(cx, z, &format!("Y !⊥ D | Z={z}"), |cx, d| cx.dn(z, d))?);
    }
    let t = table(cx, |z, d| times(cx.f(z, d), &one_plus(&etas[z])));
    finish_table(cx, t, JointRoute::FromTable)
}

fn outcome_y<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    for y in 0..cx.k() {
        let mass = (0..2)
            .flat_map(|z| (0..2).map(move |d| (z, d)))
            .fold(S::zero(), |acc, (z, d)| acc + cx.f(z, d)[y].clone());
        cx.positive(format!("observed mass at Y={}", cx.y(y)), &mass)?;
    }
    let eta = eta_pooled(cx, "Y !⊥ (Z,D)")?;
    let t = table(cx, |z, d| times(cx.f(z, d), &one_plus(&eta)));
    finish_table(cx, t, JointRoute::FromTable)
}

/// 1UY and 2UY: both carry a response factor in (c, y) on complier cells.
fn stratum_ratio<S: Scalar>(cx: &mut Cx<S>, treatment_side: bool) -> R<Solved<S>> {
    let one = S::one();
    let c0 = strip_stratum(cx.f(0, 0), cx.f(1, 0), &one, &cx.tol)?;
    let c1 = strip_stratum(cx.f(1, 1), cx.f(0, 1), &one, &cx.tol)?;
    let joint = if !treatment_side {
        JointRoute::Unavailable("the joint law is not identified under 1UY".into())
    } else if !cx.one_sided() {
        JointRoute::Unavailable("the joint law is not identified under 2UY with two-sided noncompliance".into())
    } else {
        joint_treatment_uy(cx)
    };
    ratio_route(cx, &c0, &c1, &one, joint)
}

fn quiet_solve<S: Scalar>(cx: &Cx<S>, rows: Vec<Vec<S>>, rhs: Vec<S>, what: &str) -> Result<Vec<S>, String> {
    let sol = solve_system(&rows, &rhs, cx.tol.det, cx.tol.prob).map_err(|e| format!("{what}: {e:?}"))?;
    sol.values
        .into_iter()
        .map(|v| clamp_nonneg(v, cx.tol.prob).ok_or_else(|| format!("{what}: negative odds")))
        .collect()
}

fn joint_treatment_uy<S: Scalar>(cx: &Cx<S>) -> JointRoute<S> {
    let k = cx.k();
    let (mut never, mut c0, mut c1) = (vec![S::zero(); k], vec![S::zero(); k], vec![S::zero(); k]);
    for y in 0..k {
        let n = cx.f(1, 0)[y].clone();
        let cz0 = cx.f(0, 0)[y].clone() - n.clone();
        let rows = vec![vec![n.clone(), cx.f(1, 1)[y].clone()], vec![n.clone(), cz0.clone()]];
        let rhs = vec![cx.yo(1)[y].clone(), cx.yo(0)[y].clone()];
        let zeta = match quiet_solve(cx, rows, rhs, &format!("zeta_y{}(u) system", cx.y(y))) {
            Ok(z) => z,
            Err(e) => return JointRoute::Unavailable(e),
        };
        never[y] = n * (S::one() + zeta[0].clone());
        c0[y] = cz0 * (S::one() + zeta[1].clone());
        c1[y] = cx.f(1, 1)[y].clone() * (S::one() + zeta[1].clone());
    }
    strata_one_sided(cx, never, c0, c1)
}

/// Strata of a one-sided design from unnormalized never-taker and complier
/// masses.
fn strata_one_sided<S: Scalar>(cx: &Cx<S>, never: Vec<S>, c0: Vec<S>, c1: Vec<S>) -> JointRoute<S> {
    let tol = cx.tol.prob;
    let (sn, sc) = (sum(&never), sum(&c1));
    let sc0 = sum(&c0);
    if !sc.positive(tol) || !sc0.positive(tol) {
        return JointRoute::Unavailable("complier share is not positive".into());
    }
    let n_law = if sn.near_zero(tol) { Vec::new() } else { divided(&never, &sn) };
    JointRoute::Strata(latent(
        [
            (ComplianceType::Always, S::zero()),
            (ComplianceType::Complier, sc.clone()),
            (ComplianceType::Never, if sn.near_zero(tol) { S::zero() } else { sn }),
        ],
        Vec::new(),
        divided(&c0, &sc0),
        divided(&c1, &sc),
        n_law,
    ))
}

fn treatment_zy<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let k = cx.k();
    let mut t = empty_table(k);
    for z in 0..2 {
        for y in 0..k {
            let seen = cx.f(z, 0)[y].clone() + cx.f(z, 1)[y].clone();
            let name = format!("P(R^D=1|Z={z},Y={})", cx.y(y));
            if let Some(r) = rate(cx, name, seen, cx.yo(z)[y].clone())? {
                for d in 0..2 {
                    t[z][d][y] = cx.f(z, d)[y].clone() / r.clone();
                }
            }
        }
    }
    finish_table(cx, t, JointRoute::FromTable)
}

fn treatment_dy<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let k = cx.k();
    for d in 0..2 {
        observed_dy(cx, d)?;
    }
    let mut zeta = vec![vec![S::zero(); 2]; k];
    for y in 0..k {
        let rows = (0..2).map(|z| vec![cx.f(z, 0)[y].clone(), cx.f(z, 1)[y].clone()]).collect();
        let rhs = (0..2).map(|z| cx.yo(z)[y].clone()).collect();
        zeta[y] = cx.solve(&format!("D !⊥ Z | Y={}", cx.y(y)), rows, rhs)?;
        for d in 0..2 {
            cx.note(format!("zeta_y{}(d{d})", cx.y(y)), &zeta[y][d].clone());
        }
    }
    let t = table(cx, |z, d| (0..k).map(|y| cx.f(z, d)[y].clone() * (S::one() + zeta[y][d].clone())).collect());
    finish_table(cx, t, JointRoute::FromTable)
}

fn treatment_ud<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let t = cx.obs.full_table();
    let (control, treated) = complier_laws(cx, &t)?;
    let joint = joint_treatment_ud(cx);
    Ok(Solved { route: Route::Laws { treated, control }, joint })
}

fn joint_treatment_ud<S: Scalar>(cx: &Cx<S>) -> JointRoute<S> {
    let k = cx.k();
    let never = cx.f(1, 0).to_vec();
    let always = cx.f(0, 1).to_vec();
    let c0 = minus(cx.f(0, 0), cx.f(1, 0));
    let c1 = minus(cx.f(1, 1), cx.f(0, 1));
    let zero = S::zero();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for z in 0..2 {
        for y in 0..k {
            let (c0y, c1y) = if z == 0 { (c0[y].clone(), zero.clone()) } else { (zero.clone(), c1[y].clone()) };
            rows.push(vec![never[y].clone(), always[y].clone(), c0y, c1y]);
            rhs.push(cx.yo(z)[y].clone());
        }
    }
    let zeta = match quiet_solve(cx, rows, rhs, "zeta(u,d) system") {
        Ok(z) => z,
        Err(e) => return JointRoute::Unavailable(e),
    };
    let tol = cx.tol.prob;
    let share = |v: &[S], odds: &S| sum(v) * (S::one() + odds.clone());
    let (sn, sa, sc) = (share(&never, &zeta[0]), share(&always, &zeta[1]), share(&c1, &zeta[3]));
    let law = |v: &[S]| -> Vec<S> {
        let t = sum(v);
        if t.near_zero(tol) {
            Vec::new()
        } else {
            divided(v, &t)
        }
    };
    if !sc.positive(tol) {
        return JointRoute::Unavailable("complier share is not positive".into());
    }
    JointRoute::Strata(latent(
        [(ComplianceType::Always, sa), (ComplianceType::Complier, sc), (ComplianceType::Never, sn)],
        law(&always),
        law(&c0),
        law(&c1),
        law(&never),
    ))
}

/// ζ_z(d) from rows over y (`f(z,·,y)·ζ = yo(z,y)`), optionally stacked with
/// the row of cells where only D is recorded.
fn zeta_by_z<S: Scalar>(cx: &mut Cx<S>, z: usize, check: &str, stacked: bool, coef: &DyTable<S>) -> R<Vec<S>> {
    let k = cx.k();
    let mut rows: Vec<Vec<S>> = (0..k).map(|y| vec![coef[z][0][y].clone(), coef[z][1][y].clone()]).collect();
    let mut rhs: Vec<S> = cx.yo(z).to_vec();
    if stacked {
        rows.push(vec![cx.dn(z, 0), cx.dn(z, 1)]);
        rhs.push(cx.nn(z));
    }
    let zeta = cx.solve(check, rows, rhs)?;
    for d in 0..2 {
        cx.note(format!("zeta_z{z}(d{d})"), &zeta[d].clone());
    }
    Ok(zeta)
}

fn treatment_zd<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let f = cx.obs.full_table();
    let mut zetas = Vec::new();
    for z in 0..2 {
        for d in reachable_d(cx, z) {
            cx.positive(format!("observed mass at Z={z}, D={d}"), &sum(cx.f(z, d)))?;
        }
        zetas.push(zeta_by_z(cx, z, &format!("Y !⊥ D | Z={z}"), false, &f)?);
    }
    let t = table(cx, |z, d| scaled(cx.f(z, d), &(S::one() + zetas[z][d].clone())));
    finish_table(cx, t, JointRoute::FromTable)
}

/// Unnormalized law of the never-takers and treated compliers in arm Z=1.
fn arm_one_laws<S: Scalar>(cx: &mut Cx<S>, rd_name: &str) -> R<(Vec<S>, Vec<S>)> {
    let n = cx.f(1, 0).to_vec();
    let c = cx.f(1, 1).to_vec();
    let fn0 = cx.normalize(&format!("{rd_name} observed mass at Z=1, U=n"), n)?;
    let fc1 = cx.normalize(&format!("{rd_name} observed mass at Z=1, U=c"), c)?;
    Ok((fn0, fc1))
}

fn mixture_laws<S: Scalar>(
    cx: &mut Cx<S>,
    pi: S,
    fn0: Vec<S>,
    fc1: Vec<S>,
    control_target: &[S],
) -> R<Solved<S>> {
    let rest = S::one() - pi.clone();
    cx.note("P(U=n)", &pi);
    cx.note("P(U=c)", &rest);
    let raw: Vec<S> = minus(control_target, &scaled(&fn0, &pi));
    let mut control = Vec::with_capacity(raw.len());
    for v in raw {
        control.push(cx.nonneg("recovered P(Y|c,0)", v / rest.clone())?);
    }
    let total = sum(&control);
    if !S::is_exact() && total.positive(cx.tol.prob) {
        control = divided(&control, &total);
    }
    let joint = JointRoute::Strata(latent(
        [
            (ComplianceType::Always, S::zero()),
            (ComplianceType::Complier, rest),
            (ComplianceType::Never, pi),
        ],
        Vec::new(),
        control.clone(),
        fc1.clone(),
        fn0,
    ));
    Ok(Solved { route: Route::Laws { treated: fc1, control }, joint })
}

fn treatment_zu<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let (fn0, fc1) = arm_one_laws(cx, "R^D")?;
    let g = |cx: &Cx<S>, z: usize| plus(&plus(cx.f(z, 0), cx.f(z, 1)), cx.yo(z));
    let (g1, g0) = (g(cx, 1), g(cx, 0));
    let pi = cx.mixture("Y !⊥ U | Z=1", &g1, &fn0, &fc1)?;
    mixture_laws(cx, pi, fn0, fc1, &g0)
}

fn feed_ud_zd<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let q = outcome_rates(cx, ",R^D=1")?;
    let t = table(cx, |z, d| match &q[z][d] {
        Some(r) => divided(cx.f(z, d), r),
        None => vec![S::zero(); cx.k()],
    });
    subtract(cx, t)
}

fn feed_ud_dy<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let mut etas = Vec::new();
    for d in 0..2 {
        observed_dy(cx, d)?;
        etas.push(eta_by_d(cx, d, &format!("Y !⊥ Z | D={d}, R^D=1"), |cx, z| cx.dn(z, d))?);
    }
    let t = table(cx, |z, d| times(cx.f(z, d), &one_plus(&etas[d])));
    subtract(cx, t)
}

fn feed_ud_zy<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let mut etas = Vec::new();
    for z in 0..2 {
        etas.push(eta_by_z(cx, z, &format!("Y !⊥ D | Z={z}, R^D=1"), |cx, d| cx.dn(z, d))?);
    }
    let t = table(cx, |z, d| times(cx.f(z, d), &one_plus(&etas[z])));
    subtract(cx, t)
}

fn feed_ud_uy<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let one = S::one();
    let c0 = strip_stratum(cx.f(0, 0), cx.f(1, 0), &one, &cx.tol)?;
    let c1 = strip_stratum(cx.f(1, 1), cx.f(0, 1), &one, &cx.tol)?;
    let recorded = |cx: &Cx<S>, z: usize, d: usize| sum(cx.f(z, d)) + cx.dn(z, d);
    let m0 = cx.nonneg("complier mass at D=0, R^D=1", recorded(cx, 0, 0) - recorded(cx, 1, 0))?;
    let m1 = cx.nonneg("complier mass at D=1, R^D=1", recorded(cx, 1, 1) - recorded(cx, 0, 1))?;
    cx.positive("complier mass at D=0, R^D=1", &m0)?;
    cx.positive("complier mass at D=1, R^D=1", &m1)?;
    ratio_route(cx, &c0, &c1, &(m1 / m0), JointRoute::Unavailable(NOT_STATED.into()))
}

/// R^D positivity in the Both regime at every reachable (z, d).
fn recorded_d<S: Scalar>(cx: &mut Cx<S>) -> R<()> {
    for z in 0..2 {
        for d in reachable_d(cx, z) {
            let mass = sum(cx.f(z, d)) + cx.dn(z, d);
            cx.positive(format!("P(R^D=1|Z={z},D={d})"), &mass)?;
        }
    }
    Ok(())
}

/// ζ_z(d) for both arms, from the augmented (stacked) system.
fn zeta_stacked<S: Scalar>(cx: &mut Cx<S>) -> R<Vec<Vec<S>>> {
    recorded_d(cx)?;
    let f = cx.obs.full_table();
    (0..2).map(|z| zeta_by_z(cx, z, &format!("Y† !⊥ D | Z={z}"), true, &f)).collect()
}

fn sep_zd_zd<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let zetas = zeta_stacked(cx)?;
    let q = outcome_rates(cx, "")?;
    let t = table(cx, |z, d| match &q[z][d] {
        Some(r) => scaled(cx.f(z, d), &((S::one() + zetas[z][d].clone()) / r.clone())),
        None => vec![S::zero(); cx.k()],
    });
    finish_table(cx, t, JointRoute::Unavailable(NOT_STATED.into()))
}

fn with_zeta<S: Scalar>(cx: &Cx<S>, zetas: &[Vec<S>]) -> DyTable<S> {
    table(cx, |z, d| scaled(cx.f(z, d), &(S::one() + zetas[z][d].clone())))
}

fn sep_zd_ud<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let zetas = zeta_stacked(cx)?;
    let t = with_zeta(cx, &zetas);
    subtract(cx, t)
}

fn sep_zd_dy<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let zetas = zeta_stacked(cx)?;
    let mut etas = Vec::new();
    for d in 0..2 {
        observed_dy(cx, d)?;
        etas.push(eta_by_d(cx, d, &format!("Y !⊥ Z | D={d}, R^D=1"), |cx, z| cx.dn(z, d))?);
    }
    let t = table(cx, |z, d| {
        scaled(&times(cx.f(z, d), &one_plus(&etas[d])), &(S::one() + zetas[z][d].clone()))
    });
    finish_table(cx, t, JointRoute::Unavailable(NOT_STATED.into()))
}

fn sep_zd_zy<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    recorded_d(cx)?;
    let f = cx.obs.full_table();
    let mut zetas = Vec::new();
    let mut etas = Vec::new();
    for z in 0..2 {
        zetas.push(zeta_by_z(cx, z, &format!("Y !⊥ D | Z={z}"), false, &f)?);
        etas.push(eta_by_z(cx, z, &format!("Y !⊥ D | Z={z}, R^D=1"), |cx, d| cx.dn(z, d))?);
    }
    let t = table(cx, |z, d| {
        scaled(&times(cx.f(z, d), &one_plus(&etas[z])), &(S::one() + zetas[z][d].clone()))
    });
    finish_table(cx, t, JointRoute::Unavailable(NOT_STATED.into()))
}

fn sep_zd_uy<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let zetas = zeta_stacked(cx)?;
    let t = with_zeta(cx, &zetas);
    let one = S::one();
    let c0 = strip_stratum(&t[0][0], &t[1][0], &one, &cx.tol)?;
    let c1 = strip_stratum(&t[1][1], &t[0][1], &one, &cx.tol)?;
    ratio_route(cx, &c0, &c1, &one, JointRoute::Unavailable(NOT_STATED.into()))
}

fn sep_zu_zd<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let q = outcome_rates(cx, "")?;
    let (Some(r10), Some(r11), Some(r00)) = (q[1][0].clone(), q[1][1].clone(), q[0][0].clone()) else {
        return Err(IdentifyError::PositivityViolated { cell: "P(R^D=1|Z=1,U) or arm Z=0".into(), mass: 0.0 });
    };
    let (fn0, fc1) = arm_one_laws(cx, "R^D")?;
    let g1 = plus(&plus(cx.f(1, 0), cx.f(1, 1)), cx.yo(1));
    let pi = cx.mixture("Y !⊥ U | Z=1", &g1, &scaled(&fn0, &r10), &scaled(&fc1, &r11))?;
    let g0 = divided(&plus(cx.f(0, 0), cx.yo(0)), &r00);
    mixture_laws(cx, pi, fn0, fc1, &g0)
}

fn sep_zu_ud<S: Scalar>(cx: &mut Cx<S>, ratio: bool) -> R<Solved<S>> {
    let mut g = Vec::new();
    for d in 0..2 {
        let recorded = sum(cx.f(1, d)) + cx.dn(1, d);
        let u = if d == 0 { "n" } else { "c" };
        cx.positive(format!("P(R^D=1|Z=1,U={u})"), &recorded)?;
        g.push(divided(cx.f(1, d), &recorded));
    }
    let (gn, gc1) = (g[0].clone(), g[1].clone());
    let g1 = plus(&plus(cx.f(1, 0), cx.f(1, 1)), cx.yo(1));
    let pi = cx.mixture("Y !⊥ U | Z=1", &g1, &gn, &gc1)?;
    let rest = S::one() - pi.clone();
    cx.note("P(U=n)", &pi);
    cx.note("P(U=c)", &rest);
    let g0 = plus(cx.f(0, 0), cx.yo(0));
    let mut gc0 = Vec::new();
    for v in minus(&g0, &scaled(&gn, &pi)) {
        gc0.push(cx.nonneg("recovered complier mass at D=0", v / rest.clone())?);
    }
    if ratio {
        return ratio_route(cx, &gc0, &gc1, &S::one(), JointRoute::Unavailable(NOT_STATED.into()));
    }
    let control = cx.normalize("P(R^Y=1|U=c,D=0)", gc0)?;
    let treated = cx.normalize("P(R^Y=1|U=c,D=1)", gc1)?;
    let n_total = sum(&gn);
    let never = if n_total.positive(cx.tol.prob) { divided(&gn, &n_total) } else { Vec::new() };
    let joint = JointRoute::Strata(latent(
        [(ComplianceType::Always, S::zero()), (ComplianceType::Complier, rest), (ComplianceType::Never, pi)],
        Vec::new(),
        control.clone(),
        treated.clone(),
        never,
    ));
    Ok(Solved { route: Route::Laws { treated, control }, joint })
}

#[derive(Clone, Copy)]
enum FeedZ {
    Zd,
    Ud,
    Uy,
    Dy,
    Zy,
}

fn feed_z<S: Scalar>(cx: &mut Cx<S>, kind: FeedZ) -> R<Solved<S>> {
    let mut s = Vec::new();
    for z in 0..2 {
        let recorded = sum(cx.f(z, 0)) + sum(cx.f(z, 1)) + cx.dn(z, 0) + cx.dn(z, 1);
        let name = format!("P(R^D=1|Z={z})");
        cx.positive(name.clone(), &recorded)?;
        cx.note(name, &recorded);
        s.push(recorded);
    }
    let per_arm = |cx: &Cx<S>, z: usize, d: usize| divided(cx.f(z, d), &s[z]);
    match kind {
        FeedZ::Zd => {
            let q = outcome_rates(cx, ",R^D=1")?;
            let t = table(cx, |z, d| match &q[z][d] {
                Some(r) => divided(&per_arm(cx, z, d), r),
                None => vec![S::zero(); cx.k()],
            });
            finish_table(cx, t, JointRoute::Unavailable(NOT_STATED.into()))
        }
        FeedZ::Ud => {
            let t = table(cx, |z, d| per_arm(cx, z, d));
            subtract(cx, t)
        }
        FeedZ::Uy => {
            let t = table(cx, |z, d| per_arm(cx, z, d));
            let one = S::one();
            let c0 = strip_stratum(&t[0][0], &t[1][0], &one, &cx.tol)?;
            let c1 = strip_stratum(&t[1][1], &t[0][1], &one, &cx.tol)?;
            ratio_route(cx, &c0, &c1, &one, JointRoute::Unavailable(NOT_STATED.into()))
        }
        FeedZ::Dy => {
            let mut etas = Vec::new();
            for d in 0..2 {
                observed_dy(cx, d)?;
                etas.push(eta_by_d(cx, d, &format!("Y !⊥ Z | D={d}, R^D=1"), |cx, z| cx.dn(z, d))?);
            }
            let t = table(cx, |z, d| times(&per_arm(cx, z, d), &one_plus(&etas[d])));
            finish_table(cx, t, JointRoute::Unavailable(NOT_STATED.into()))
        }
        FeedZ::Zy => {
            let mut etas = Vec::new();
            for z in 0..2 {
                etas.push(eta_by_z(cx, z, &format!("Y !⊥ D | Z={z}, R^D=1"), |cx, d| cx.dn(z, d))?);
            }
            let t = table(cx, |z, d| times(&per_arm(cx, z, d), &one_plus(&etas[z])));
            finish_table(cx, t, JointRoute::Unavailable(NOT_STATED.into()))
        }
    }
}

/// P(R^Y=1 | Z=z, R^D=1) and P(R^Y=1 | Z=z, R^D=0); the latter is `None`
/// when R^D=0 never occurs in the arm.
fn outcome_rates_by_z<S: Scalar>(cx: &mut Cx<S>, z: usize) -> R<(S, Option<S>)> {
    let seen = sum(cx.f(z, 0)) + sum(cx.f(z, 1));
    let hidden = cx.dn(z, 0) + cx.dn(z, 1);
    let r1 = rate(cx, format!("P(R^Y=1|Z={z},R^D=1)"), seen, hidden)?.ok_or_else(|| {
        IdentifyError::PositivityViolated { cell: format!("P(R^D=1|Z={z})"), mass: 0.0 }
    })?;
    let r0 = rate(cx, format!("P(R^Y=1|Z={z},R^D=0)"), sum(cx.yo(z)), cx.nn(z))?;
    Ok((r1, r0))
}

fn feed_zd_z<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    recorded_d(cx)?;
    let f = cx.obs.full_table();
    let mut zetas = Vec::new();
    let mut r1s = Vec::new();
    for z in 0..2 {
        let (r1, r0) = outcome_rates_by_z(cx, z)?;
        let theta = zeta_by_z(cx, z, &format!("Y !⊥ D | Z={z}"), false, &f)?;
        let zeta: Vec<S> = match r0 {
            Some(r0) => theta.iter().map(|t| t.clone() * r1.clone() / r0.clone()).collect(),
            None => vec![S::zero(); 2],
        };
        for d in 0..2 {
            cx.note(format!("zeta_z{z}(d{d})"), &zeta[d].clone());
        }
        zetas.push(zeta);
        r1s.push(r1);
    }
    let t = table(cx, |z, d| scaled(cx.f(z, d), &((S::one() + zetas[z][d].clone()) / r1s[z].clone())));
    finish_table(cx, t, JointRoute::Unavailable(NOT_STATED.into()))
}

/// P(R^Y=1 | D=d, R^D=1), pooled over arms with P(Z) weights.
fn pooled_outcome_rates<S: Scalar>(cx: &mut Cx<S>) -> R<[S; 2]> {
    let mut out = Vec::new();
    for d in 0..2 {
        let (mut seen, mut hidden) = (S::zero(), S::zero());
        for z in (0..2).filter(|&z| cx.reach(z, d)) {
            let w = cx.p_z(z);
            seen = seen + w.clone() * sum(cx.f(z, d));
            hidden = hidden + w * cx.dn(z, d);
        }
        let r = rate(cx, format!("P(R^Y=1|D={d},R^D=1)"), seen, hidden)?;
        out.push(r);
    }
    let mut it = out.into_iter();
    let (r0, r1) = (it.next().unwrap(), it.next().unwrap());
    match (r0, r1) {
        (Some(a), Some(b)) => Ok([a, b]),
        _ => Err(IdentifyError::PositivityViolated { cell: "P(R^D=1|D=d)".into(), mass: 0.0 }),
    }
}

fn feed_zd_d<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    recorded_d(cx)?;
    let r1 = pooled_outcome_rates(cx)?;
    let fp: DyTable<S> = table(cx, |z, d| divided(cx.f(z, d), &r1[d]));
    let mut thetas = Vec::new();
    for z in 0..2 {
        thetas.push(zeta_by_z(cx, z, &format!("Y !⊥ D | Z={z}"), false, &fp)?);
    }
    let rows: Vec<Vec<S>> =
        (0..2).map(|z| (0..2).map(|d| thetas[z][d].clone() * sum(&fp[z][d])).collect()).collect();
    let rhs: Vec<S> = (0..2).map(|z| sum(cx.yo(z)) + cx.nn(z)).collect();
    let w = cx.solve("D !⊥ Z", rows, rhs)?;
    for d in 0..2 {
        cx.note(format!("1/P(R^Y=1|D={d},R^D=0)"), &w[d].clone());
    }
    let t = table(cx, |z, d| scaled(&fp[z][d], &(S::one() + thetas[z][d].clone() * w[d].clone())));
    finish_table(cx, t, JointRoute::Unavailable(NOT_STATED.into()))
}

/// ξ(y): odds of R^Y=0 given (Y=y, R^D=0), from rows z.
fn xi<S: Scalar>(cx: &mut Cx<S>) -> R<Vec<S>> {
    let rows = (0..2).map(|z| cx.yo(z).to_vec()).collect();
    let rhs = (0..2).map(|z| cx.nn(z)).collect();
    let xi = cx.solve("Y !⊥ Z | R^D=0", rows, rhs)?;
    for (y, v) in xi.iter().enumerate() {
        cx.note(format!("xi(y{})", cx.y(y)), v);
    }
    Ok(xi)
}

fn feed_zd_y<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    recorded_d(cx)?;
    let eta = eta_pooled(cx, "Y !⊥ (Z,D) | R^D=1")?;
    let xi = xi(cx)?;
    let fp: DyTable<S> = table(cx, |z, d| times(cx.f(z, d), &one_plus(&eta)));
    let k = cx.k();
    let mut zetas = Vec::new();
    for z in 0..2 {
        let rows = (0..k).map(|y| vec![fp[z][0][y].clone(), fp[z][1][y].clone()]).collect();
        let rhs = times(cx.yo(z), &one_plus(&xi));
        let zeta = cx.solve(&format!("Y !⊥ D | Z={z}"), rows, rhs)?;
        for d in 0..2 {
            cx.note(format!("zeta_z{z}(d{d})"), &zeta[d].clone());
        }
        zetas.push(zeta);
    }
    let t = table(cx, |z, d| scaled(&fp[z][d], &(S::one() + zetas[z][d].clone())));
    finish_table(cx, t, JointRoute::Unavailable(NOT_STATED.into()))
}

fn feed_zu_z<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let mut p_y = Vec::new();
    for z in 0..2 {
        let (r1, r0) = outcome_rates_by_z(cx, z)?;
        let seen = divided(&plus(cx.f(z, 0), cx.f(z, 1)), &r1);
        p_y.push(match r0 {
            Some(r0) => plus(&seen, &divided(cx.yo(z), &r0)),
            None => seen,
        });
    }
    let (fn0, fc1) = arm_one_laws(cx, "R^D")?;
    let pi = cx.mixture("Y !⊥ U | Z=1", &p_y[1], &fn0, &fc1)?;
    mixture_laws(cx, pi, fn0, fc1, &p_y[0])
}

fn feed_zu_u<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    for (d, u) in [(0, "n"), (1, "c")] {
        cx.positive(format!("observed mass at Z=1, U={u}"), &sum(cx.f(1, d)))?;
    }
    let rows = vec![vec![sum(cx.f(1, 0)), sum(cx.f(1, 1))], vec![cx.dn(1, 0), cx.dn(1, 1)]];
    let rhs = vec![sum(cx.f(0, 0)), cx.dn(0, 0)];
    let ratio = cx.solve("R^Y !⊥ U | R^D=1", rows, rhs)?;
    cx.note("P(R^D=1|Z=0,U=n)/P(R^D=1|Z=1,U=n)", &ratio[0].clone());
    cx.note("P(R^D=1|Z=0,U=c)/P(R^D=1|Z=1,U=c)", &ratio[1].clone());
    let c0 = strip_stratum(cx.f(0, 0), cx.f(1, 0), &ratio[0], &cx.tol)?;
    let control = cx.normalize("complier mass at D=0", c0)?;
    let treated = cx.normalize("complier mass at D=1", cx.f(1, 1).to_vec())?;
    Ok(Solved { route: Route::Laws { treated, control }, joint: JointRoute::Unavailable(NOT_STATED.into()) })
}

fn feed_zu_d<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let r1 = pooled_outcome_rates(cx)?;
    let fp: DyTable<S> = table(cx, |z, d| divided(cx.f(z, d), &r1[d]));
    let k = cx.k();
    let rows = (0..k).map(|y| vec![fp[1][0][y].clone(), fp[1][1][y].clone()]).collect();
    let theta = cx.solve("Y !⊥ U | Z=1", rows, cx.yo(1).to_vec())?;
    let r00 = rate(cx, "P(R^Y=1|D=0,R^D=0)".into(), sum(cx.yo(0)), cx.nn(0))?;
    let (eta_n, hidden0) = match r00 {
        Some(r) => (theta[0].clone() / r.clone(), divided(cx.yo(0), &r)),
        None => (S::zero(), vec![S::zero(); k]),
    };
    cx.note("zeta(n)", &eta_n);
    let pi = sum(&fp[1][0]) * (S::one() + eta_n);
    let rest = S::one() - pi.clone();
    if rest.near_zero(cx.tol.prob) || rest < S::zero() {
        return Err(IdentifyError::ZeroFirstStage);
    }
    let fn0 = cx.normalize("observed mass at Z=1, U=n", fp[1][0].clone())?;
    let fc1 = cx.normalize("observed mass at Z=1, U=c", fp[1][1].clone())?;
    let p_y0 = plus(&fp[0][0], &hidden0);
    mixture_laws(cx, pi, fn0, fc1, &p_y0)
}

fn feed_zu_y<S: Scalar>(cx: &mut Cx<S>) -> R<Solved<S>> {
    let eta = eta_pooled(cx, "Y !⊥ (Z,D) | R^D=1")?;
    let xi = xi(cx)?;
    let p_y: Vec<Vec<S>> = (0..2)
        .map(|z| {
            let seen = times(&plus(cx.f(z, 0), cx.f(z, 1)), &one_plus(&eta));
            plus(&seen, &times(cx.yo(z), &one_plus(&xi)))
        })
        .collect();
    let n = times(cx.f(1, 0), &one_plus(&eta));
    let c = times(cx.f(1, 1), &one_plus(&eta));
    let fn0 = cx.normalize("observed mass at Z=1, U=n", n)?;
    let fc1 = cx.normalize("observed mass at Z=1, U=c", c)?;
    let pi = cx.mixture("Y !⊥ U | Z=1", &p_y[1], &fn0, &fc1)?;
    mixture_laws(cx, pi, fn0, fc1, &p_y[0])
}

fn reachable_d<S: Scalar>(cx: &Cx<S>, z: usize) -> Vec<usize> {
    (0..2).filter(|&d| cx.reach(z, d)).collect()
}
