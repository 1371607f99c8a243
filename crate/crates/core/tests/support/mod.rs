pub mod golden;
pub mod oracle;
