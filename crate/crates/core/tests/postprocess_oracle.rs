//! Convex postprocessing against values frozen from an exact linear program:
//! for each grid point, the minimum of `g(x)` over convex sequences `g` with
//! `lower <= g <= gcm(upper)`.

use shapeband::bands::ConfidenceBand;
use shapeband::kernels::ShapeClass;
use shapeband::shape::{gcm, postprocess, refine_lower_reference};

const UPPER_0: [f64; 29] = [
    1.666799554019854,
    1.5250055938929636,
    1.0816952770141206,
    0.8888596897063478,
    0.7591609997853088,
    0.6659352782324234,
    0.4755098696379601,
    0.4812903023388537,
    0.3831987037260186,
    0.13672162435620996,
    0.19523023554312002,
    -0.039239658011578374,
    0.04622326651794931,
    0.16014575264012215,
    0.08151474049412963,
    0.008415563527897407,
    -0.07188807644967858,
    -0.09299609709913192,
    0.005967631023625436,
    -0.0019328588201931313,
    0.23210236260735834,
    0.10197803255283196,
    0.2021756773232381,
    0.457383648151885,
    0.4045210551197561,
    0.5266682522641482,
    0.6032073896803645,
    0.8712544905272392,
    0.9729579992809588,
];
const LOWER_0: [f64; 29] = [
    0.9055510981371107,
    0.8856434550296935,
    0.5521696374796982,
    0.46434255582121675,
    0.30978212615502404,
    0.013836132800628897,
    -0.09957012100846357,
    0.02622619710682327,
    -0.13013084705944036,
    -0.20505621861213724,
    -0.500857566417756,
    -0.4615041791169924,
    -0.45953620299350073,
    -0.6374360313679712,
    -0.5176715800104492,
    -0.6298533775194786,
    -0.4927241593420624,
    -0.4167869726940475,
    -0.5904117495897928,
    -0.44112712391412207,
    -0.3877087841877144,
    -0.29944744701031806,
    -0.21022696022944293,
    -0.21052862187674795,
    -0.03087142442449782,
    0.06384403833780097,
    0.2666378971879456,
    0.3248179296532324,
    0.4633541837556191,
];
const GCM_0: [f64; 29] = [
    1.666799554019854,
    1.3742474155169873,
    1.0816952770141206,
    0.8888596897063478,
    0.7510764163502186,
    0.6132931429940893,
    0.4755098696379601,
    0.3625804545440434,
    0.2496510394501267,
    0.13672162435620996,
    0.04874098317231579,
    -0.039239658011578374,
    -0.048199064526170635,
    -0.057158471040762895,
    -0.06611787755535514,
    -0.0750772840699474,
    -0.08403669058453966,
    -0.09299609709913192,
    -0.04746447795966253,
    -0.0019328588201931313,
    0.05002258686631941,
    0.10197803255283196,
    0.2021756773232381,
    0.3024336054125197,
    0.4026915335018013,
    0.5029494615910829,
    0.6032073896803645,
    0.7880826944806616,
    0.9729579992809588,
];
const LP_INF_0: [f64; 29] = [
    0.9792586838638789,
    0.8856434550296935,
    0.5521696374796982,
    0.46434255582121675,
    0.30978212615502404,
    0.058959124666024085,
    0.042592660886423675,
    0.02622619710682327,
    -0.13013084705944036,
    -0.20505621861213724,
    -0.387375536665218,
    -0.4615041791169924,
    -0.45953620299350073,
    -0.6061929532337751,
    -0.5176715800104492,
    -0.6023173142443051,
    -0.4927241593420624,
    -0.4167869726940475,
    -0.47971152514112575,
    -0.44112712391412207,
    -0.3877087841877144,
    -0.29944744701031806,
    -0.21022696022944293,
    -0.21052862187674795,
    -0.03087142442449782,
    0.06384403833780097,
    0.2666378971879456,
    0.3248179296532324,
    0.4633541837556191,
];
const UPPER_1: [f64; 29] = [
    1.2787603079690073,
    1.2200278269743152,
    1.1458426310251637,
    1.0477054679038518,
    0.768912187559803,
    0.7267035756856868,
    0.5787547689399564,
    0.48299686867942065,
    0.5055551983902771,
    0.46932214376232634,
    0.5533199512161311,
    0.25800414285144874,
    0.43727389615594325,
    0.33797971944135796,
    0.3661550740952826,
    0.23193824372261657,
    0.4372434130312793,
    0.3291308261990955,
    0.36701734421402354,
    0.4526001078776095,
    0.40989817108321613,
    0.5214689179185376,
    0.4999335140214621,
    0.7493301243074136,
    0.6576544531151831,
    0.810413282034191,
    0.9012344010207212,
    0.9943349165908527,
    1.2487914201735817,
];
const LOWER_1: [f64; 29] = [
    f64::NEG_INFINITY,
    0.324883414260147,
    0.3342300104069193,
    0.005795383022440759,
    0.014718431559630513,
    0.05596230860254835,
    -0.19556302138238607,
    -0.15399954584271242,
    -0.2763698220869891,
    -0.2870109559627268,
    -0.36164136262290314,
    -0.5019850860611944,
    -0.5012076444132056,
    -0.3769634426741648,
    -0.6575589633074954,
    -0.4579990452624328,
    -0.521051208767699,
    -0.3951093483388102,
    -0.442956599075315,
    -0.5238160922268932,
    -0.3120324209718829,
    -0.4347751312254603,
    -0.2967073423789471,
    -0.22363456825815317,
    -0.21600763792236538,
    0.0016825005029934004,
    0.22207997188366385,
    0.19073178365613272,
    f64::NEG_INFINITY,
];
const GCM_1: [f64; 29] = [
    1.2787603079690073,
    1.1512982778667062,
    1.0238362477644052,
    0.896374217662104,
    0.768912187559803,
    0.6736070812663422,
    0.5783019749728814,
    0.48299686867942065,
    0.42674868722242765,
    0.3705005057654347,
    0.31425232430844174,
    0.25800414285144874,
    0.2514876680692407,
    0.24497119328703265,
    0.2384547185048246,
    0.23193824372261657,
    0.26753022919473646,
    0.3031222146668564,
    0.3387142001389763,
    0.3743061856110962,
    0.40989817108321613,
    0.4549158425523391,
    0.4999335140214621,
    0.5787939835683226,
    0.6576544531151831,
    0.7698812742737396,
    0.8821080954322962,
    0.9943349165908527,
    1.2487914201735817,
];
const LP_INF_1: [f64; 29] = [
    0.3511690920859128,
    0.34269955124641605,
    0.3342300104069193,
    0.020767121578534706,
    0.038364715090541526,
    0.05596230860254835,
    -0.18859729127074334,
    -0.15399954584271242,
    -0.2763698220869891,
    -0.2870109559627268,
    -0.36164136262290314,
    -0.5019850860611944,
    -0.47101961501865103,
    -0.3769634426741648,
    -0.5042829571446057,
    -0.4579990452624328,
    -0.521051208767699,
    -0.3951093483388102,
    -0.442956599075315,
    -0.49865632633798795,
    -0.3120324209718829,
    -0.3731885201758293,
    -0.2967073423789471,
    -0.22363456825815317,
    -0.21600763792236538,
    0.0016825005029934004,
    0.22207997188366385,
    0.22118376535284998,
    0.2202875588220361,
];

fn band(lower: &[f64], upper: &[f64]) -> ConfidenceBand {
    ConfidenceBand {
        n: lower.len() + 1,
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        alpha: None,
        kappa: 1.0,
        shape: ShapeClass::Convex,
        sigma_used: 1.0,
        postprocessed: false,
    }
}

fn assert_close(got: &[f64], want: &[f64], tol: f64) {
    for (k, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= tol, "index {k}: {g} vs {w}");
    }
}

#[test]
fn lp_oracle_interior_band() {
    assert_close(&gcm(&UPPER_0), &GCM_0, 1e-12);
    let (post, report) = postprocess(&band(&LOWER_0, &UPPER_0));
    assert!(report.feasible);
    assert_close(&post.upper, &GCM_0, 1e-12);
    assert_close(&post.lower, &LP_INF_0, 1e-9);
    assert_close(&refine_lower_reference(&GCM_0, &LOWER_0), &LP_INF_0, 1e-9);
}

#[test]
fn lp_oracle_with_unbounded_edges() {
    assert_close(&gcm(&UPPER_1), &GCM_1, 1e-12);
    let (post, report) = postprocess(&band(&LOWER_1, &UPPER_1));
    assert!(report.feasible);
    assert_close(&post.upper, &GCM_1, 1e-12);
    assert_close(&post.lower, &LP_INF_1, 1e-9);
    assert!(post.lower.iter().all(|v| v.is_finite()));
}
