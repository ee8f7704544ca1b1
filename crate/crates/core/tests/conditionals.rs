//! Wrappers registering each conditional oracle as its own test.

mod oracles;

macro_rules! oracle_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                oracles::$name()
            }
        )*
    };
}

oracle_tests!(
    particle_mean_scalar_closed_form,
    velocity_mean_scalar_closed_form,
    cluster_mean_scalar_closed_form,
    covariance_posteriors_by_hand,
    point_assignment_weights_by_hand,
    gaussian_conditionals_match_log_joint,
    covariance_conditionals_match_log_joint,
    weight_conditionals_match_log_joint,
    discrete_conditionals_match_log_joint,
    outlier_and_feature_assignment_match_log_joint,
    grid_argmax_of_log_joint_matches_conditional_mean,
    gaussian_samplers_have_conditional_moments,
    covariance_samplers_have_inverse_wishart_mean,
    weight_samplers_have_dirichlet_mean,
    categorical_samplers_follow_their_weights,
    feature_sampler_matches_conjugate_posterior,
    empty_components_reduce_to_priors,
);
