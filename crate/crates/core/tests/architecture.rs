use ganbench_core::gancore::{build_model, Family, Layer, ModelSpec, Phase, Tensor};

const MLP_GEN: [&str; 8] = ["Dense", "Leaky ReLU", "Dense", "Leaky ReLU", "Dense", "Leaky ReLU", "Dense", "Tanh"];
const MLP_DISC: [&str; 7] = ["Dense", "Leaky ReLU", "Dense", "Leaky ReLU", "Dense", "Leaky ReLU", "Dense"];

const DCGAN_GEN: [&str; 11] = [
    "Dense",
    "Leaky ReLU",
    "Reshape",
    "Transposed Conv2D",
    "Batch Norm",
    "Leaky ReLU",
    "Transposed Conv2D",
    "Batch Norm",
    "Leaky ReLU",
    "Transposed Conv2D",
    "Tanh",
];

const CONV_CRITIC_BODY: [&str; 15] = [
    "Conv2D",
    "Leaky ReLU",
    "Dropout",
    "Conv2D",
    "Batch Norm",
    "Leaky ReLU",
    "Dropout",
    "Conv2D",
    "Batch Norm",
    "Leaky ReLU",
    "Dropout",
    "Conv2D",
    "Batch Norm",
    "Leaky ReLU",
    "Dropout",
];

fn names(layers: &[Layer]) -> Vec<&'static str> {
    layers.iter().map(|l| l.name()).collect()
}

fn without_flatten(v: Vec<&'static str>) -> Vec<&'static str> {
    v.into_iter().filter(|n| *n != "Flatten").collect()
}

#[test]
fn mlp_gan_layers() {
    let spec = ModelSpec::points(Family::MlpGan, 2);
    assert_eq!(names(&spec.generator_layers()), MLP_GEN);
    let mut disc = MLP_DISC.to_vec();
    disc.push("Sigmoid");
    assert_eq!(names(&spec.critic_layers()), disc);
}

#[test]
fn mlp_wgan_gp_layers() {
    let spec = ModelSpec::points(Family::MlpWganGp, 3);
    assert_eq!(names(&spec.generator_layers()), MLP_GEN);
    assert_eq!(names(&spec.critic_layers()), MLP_DISC);
}

#[test]
fn dcgan_layers() {
    let spec = ModelSpec::images(Family::Dcgan, 1);
    assert_eq!(names(&spec.generator_layers()), DCGAN_GEN);
    // The last feature map is projected to one logit before the sigmoid.
    let mut disc = CONV_CRITIC_BODY.to_vec();
    disc.extend(["Dense", "Sigmoid"]);
    assert_eq!(without_flatten(names(&spec.critic_layers())), disc);
}

#[test]
fn conv_wgan_gp_layers() {
    let spec = ModelSpec::images(Family::ConvWganGp, 3);
    let mut gen = DCGAN_GEN.to_vec();
    gen[1] = "ReLU";
    gen[5] = "ReLU";
    assert_eq!(names(&spec.generator_layers()), gen);
    let mut critic = CONV_CRITIC_BODY.to_vec();
    critic.push("Dense");
    assert_eq!(without_flatten(names(&spec.critic_layers())), critic);
}

#[test]
fn latent_sizes() {
    assert_eq!(ModelSpec::points(Family::MlpGan, 2).latent_dim, 2);
    assert_eq!(ModelSpec::points(Family::MlpGan, 3).latent_dim, 3);
    assert_eq!(ModelSpec::images(Family::Dcgan, 1).latent_dim, 100);
}

#[test]
fn mlp_parameter_count_matches_formula() {
    let mut spec = ModelSpec::points(Family::MlpGan, 2);
    spec.hidden = vec![64, 64, 64];
    let pair = build_model::<f32>(&spec, 0).unwrap();
    let dense = |i: usize, o: usize| i * o + o;
    let expect = dense(2, 64) + 2 * dense(64, 64) + dense(64, 2);
    assert_eq!(pair.generator.param_count(), expect);
    assert_eq!(pair.critic.param_count(), dense(2, 64) + 2 * dense(64, 64) + dense(64, 1));
}

#[test]
fn conv_parameter_count_matches_formula() {
    let spec = ModelSpec::images(Family::Dcgan, 1);
    let pair = build_model::<f32>(&spec, 0).unwrap();
    let [g0, g1, g2] = spec.gen_channels;
    let conv = |i: usize, o: usize, k: usize| i * o * k * k + o;
    let bn = |c: usize| 2 * c;
    let gen = (100 * g0 * 49 + g0 * 49) + conv(g0, g1, 3) + bn(g1) + conv(g1, g2, 4) + bn(g2) + conv(g2, 1, 4);
    assert_eq!(pair.generator.param_count(), gen);
    let [d0, d1, d2, d3] = spec.critic_channels;
    let critic = conv(1, d0, 4) + conv(d0, d1, 4) + bn(d1) + conv(d1, d2, 3) + bn(d2) + conv(d2, d3, 3) + bn(d3) + (d3 * 16 + 1);
    assert_eq!(pair.critic.param_count(), critic);
}

#[test]
fn image_models_map_shapes() {
    for (family, c) in [(Family::Dcgan, 1), (Family::ConvWganGp, 3)] {
        let spec = ModelSpec::images(family, c);
        let mut pair = build_model::<f32>(&spec, 1).unwrap();
        let z = Tensor::zeros(&[2, 100]);
        let x = pair.generator.run(z, &mut Phase::eval());
        assert_eq!(x.shape, [2, c, 28, 28]);
        assert!(x.data.iter().all(|v| v.abs() < 1.0));
        let s = pair.critic.run(x, &mut Phase::eval());
        assert_eq!(s.shape, [2, 1]);
        if family == Family::Dcgan {
            assert!(s.data.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }
}

#[test]
fn mlp_generator_on_zero_latent_is_in_tanh_range() {
    let mut spec = ModelSpec::points(Family::MlpGan, 2);
    spec.hidden = vec![64, 64, 64];
    let mut pair = build_model::<f64>(&spec, 9).unwrap();
    let out = pair.generator.run(Tensor::zeros(&[1, 2]), &mut Phase::eval());
    assert_eq!(out.shape, [1, 2]);
    assert!(out.data.iter().all(|v| v.abs() < 1.0));
}

#[test]
fn invalid_pairings_are_rejected() {
    let mut spec = ModelSpec::points(Family::Dcgan, 2);
    assert!(build_model::<f32>(&spec, 0).is_err());
    spec = ModelSpec::images(Family::MlpGan, 1);
    assert!(build_model::<f32>(&spec, 0).is_err());
}
