pub mod mask_oracle;
