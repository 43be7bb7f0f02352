// Command line front end: train / evaluate / predict.

#include <cstdint>
#include <string>

#include <CLI11.hpp>

#include "mma/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Multi-metric autoencoder ensemble for rating prediction"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "Train the four variants and the ensemble");
    train->add_option("--config", config_path, "Experiment config file")->required();

    std::string eval_checkpoint;
    std::string split_name;
    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a held-out split");
    evaluate->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
    evaluate->add_option("--split", split_name, "valid or test")->required();

    std::string pred_checkpoint;
    std::int64_t user_id = 0;
    std::int64_t item_id = 0;
    auto* predict = app.add_subcommand("predict", "Predict one rating from a checkpoint");
    predict->add_option("--checkpoint", pred_checkpoint, "Checkpoint file")->required();
    predict->add_option("--user", user_id, "Raw user id")->required();
    predict->add_option("--item", item_id, "Raw item id")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // bad usage is a config error
    }

    if (train->parsed()) return mma::cmd_train(config_path);
    if (evaluate->parsed()) return mma::cmd_evaluate(eval_checkpoint, split_name);
    return mma::cmd_predict(pred_checkpoint, user_id, item_id);
}
